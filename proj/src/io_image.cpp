#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "io_binary.hpp"
#include "uegs/io.hpp"

namespace uegs {

namespace {

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* file = nullptr;
    ~PngReadGuard() {
        if (png != nullptr) png_destroy_read_struct(&png, &info, nullptr);
        if (file != nullptr) std::fclose(file);
    }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* file = nullptr;
    ~PngWriteGuard() {
        if (png != nullptr) png_destroy_write_struct(&png, &info);
        if (file != nullptr) std::fclose(file);
    }
};

/// Decodes any PNG into 3-channel rows of 16-bit samples; 8-bit inputs are
/// reported with max_value 255, 16-bit with 65535.
ImageBuffer decode_png(const std::filesystem::path& path) {
    PngReadGuard g;
    g.file = std::fopen(path.c_str(), "rb");
    if (g.file == nullptr) throw IoError("cannot open " + path.string());

    png_byte header[8];
    if (std::fread(header, 1, 8, g.file) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw ParseError(path.string() + ": not a PNG (bad signature at byte 0)");
    }

    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (g.png == nullptr) throw IoError("libpng allocation failure");
    g.info = png_create_info_struct(g.png);
    if (g.info == nullptr) throw IoError("libpng allocation failure");
    // Declared ahead of setjmp so an error longjmp unwinds valid objects.
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(g.png))) {
        throw ParseError(path.string() + ": libpng failed to decode");
    }
    png_init_io(g.png, g.file);
    png_set_sig_bytes(g.png, 8);
    png_read_info(g.png, g.info);

    const png_uint_32 width = png_get_image_width(g.png, g.info);
    const png_uint_32 height = png_get_image_height(g.png, g.info);
    const int bit_depth = png_get_bit_depth(g.png, g.info);
    const int color_type = png_get_color_type(g.png, g.info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(g.png);
    if (png_get_valid(g.png, g.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(g.png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(g.png);
    }
    png_set_strip_alpha(g.png);
    if (bit_depth == 16) png_set_swap(g.png); // file is big-endian, host wants native
    png_read_update_info(g.png, g.info);

    const int out_depth = png_get_bit_depth(g.png, g.info);
    const std::size_t rowbytes = png_get_rowbytes(g.png, g.info);
    pixels.resize(rowbytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);

    const double max_value = out_depth == 16 ? 65535.0 : 255.0;
    ImageBuffer image(static_cast<int>(width), static_cast<int>(height), 3);
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v;
                if (out_depth == 16) {
                    std::uint16_t raw;
                    std::memcpy(&raw, rows[y] + (x * 3 + c) * 2, 2);
                    v = raw;
                } else {
                    v = rows[y][x * 3 + c];
                }
                image.at(static_cast<int>(x), static_cast<int>(y), c) = v / max_value;
            }
        }
    }
    return image;
}

} // namespace

ImageBuffer read_png(const std::filesystem::path& path) { return decode_png(path); }

ImageBuffer read_mask_png(const std::filesystem::path& path) {
    const ImageBuffer rgb = decode_png(path);
    ImageBuffer mask(rgb.width, rgb.height, 1);
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            mask.at(x, y, 0) = rgb.at(x, y, 0) != 0.0 ? 1.0 : 0.0;
        }
    }
    return mask;
}

namespace {

void encode_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth,
                int color_type) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw std::invalid_argument("png: bit depth must be 8 or 16");
    }
    const int channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
    if (image.channels != channels) {
        throw std::invalid_argument("png: channel count does not match color type");
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

    PngWriteGuard g;
    g.file = std::fopen(path.c_str(), "wb");
    if (g.file == nullptr) throw IoError("cannot create " + path.string());
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (g.png == nullptr) throw IoError("libpng allocation failure");
    g.info = png_create_info_struct(g.png);
    if (g.info == nullptr) throw IoError("libpng allocation failure");
    const std::size_t rowbytes =
        static_cast<std::size_t>(image.width) * channels * (bit_depth / 8);
    std::vector<png_byte> row(rowbytes);
    if (setjmp(png_jmpbuf(g.png))) {
        throw IoError(path.string() + ": libpng failed to encode");
    }
    png_init_io(g.png, g.file);
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(g.png, g.info);

    const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const double clamped = std::min(1.0, std::max(0.0, image.at(x, y, c)));
                const auto q = static_cast<std::uint32_t>(std::lround(clamped * max_value));
                if (bit_depth == 16) {
                    row[(static_cast<std::size_t>(x) * channels + c) * 2] =
                        static_cast<png_byte>(q >> 8); // PNG stores 16-bit big-endian
                    row[(static_cast<std::size_t>(x) * channels + c) * 2 + 1] =
                        static_cast<png_byte>(q & 0xff);
                } else {
                    row[static_cast<std::size_t>(x) * channels + c] = static_cast<png_byte>(q);
                }
            }
        }
        png_write_row(g.png, row.data());
    }
    png_write_end(g.png, nullptr);
}

} // namespace

void write_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth) {
    encode_png(path, image, bit_depth, PNG_COLOR_TYPE_RGB);
}

void write_mask_png(const std::filesystem::path& path, const ImageBuffer& mask) {
    encode_png(path, mask, 8, PNG_COLOR_TYPE_GRAY);
}

ImageBuffer read_pfm(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    // Header: "Pf\n<width> <height>\n<scale>\n", then raw f32 rows bottom-up.
    std::size_t pos = 0;
    auto token = [&](const char* field) {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
        if (start == pos) {
            throw ParseError(path.string() + ": missing " + field + " at byte " +
                             std::to_string(start));
        }
        return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                           bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    };
    const std::string kind = token("format tag");
    if (kind == "PF") throw ParseError(path.string() + ": color PFM not supported, expected Pf");
    if (kind != "Pf") throw ParseError(path.string() + ": bad format tag '" + kind + "'");
    int width = 0, height = 0;
    double scale = 0.0;
    try {
        width = std::stoi(token("width"));
        height = std::stoi(token("height"));
        scale = std::stod(token("scale"));
    } catch (const std::exception&) {
        throw ParseError(path.string() + ": malformed dimensions at byte " + std::to_string(pos));
    }
    if (width < 1 || height < 1) throw ParseError(path.string() + ": non-positive dimensions");
    if (scale >= 0.0) throw ParseError(path.string() + ": big-endian PFM not supported");
    ++pos; // single whitespace byte after the scale terminates the header

    const std::size_t expected = static_cast<std::size_t>(width) * height * 4;
    if (bytes.size() - pos != expected) {
        throw ParseError(path.string() + ": payload is " + std::to_string(bytes.size() - pos) +
                         " bytes at byte " + std::to_string(pos) + ", expected " +
                         std::to_string(expected));
    }
    ImageBuffer image(width, height, 1);
    detail::ByteReader r(bytes.data() + pos, expected, path.string());
    for (int y = height - 1; y >= 0; --y) { // PFM rows run bottom to top
        for (int x = 0; x < width; ++x) {
            image.at(x, y, 0) = static_cast<double>(r.f32("pixel"));
        }
    }
    return image;
}

void write_pfm(const std::filesystem::path& path, const ImageBuffer& image) {
    if (image.channels != 1) throw std::invalid_argument("pfm: 1-channel images only");
    std::ostringstream header;
    header << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
    detail::ByteWriter w;
    const std::string h = header.str();
    w.bytes.assign(h.begin(), h.end());
    for (int y = image.height - 1; y >= 0; --y) {
        for (int x = 0; x < image.width; ++x) {
            w.f32(static_cast<float>(image.at(x, y, 0)));
        }
    }
    write_binary_file(path, w.bytes.data(), w.bytes.size());
}

} // namespace uegs
