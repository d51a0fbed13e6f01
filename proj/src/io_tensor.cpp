#include <cstdio>
#include <stdexcept>

#include "io_binary.hpp"
#include "uegs/io.hpp"
#include "uegs/sh.hpp"

namespace uegs {

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open " + path.string());
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    if (size < 0) {
        std::fclose(f);
        throw IoError("cannot size " + path.string());
    }
    std::fseek(f, 0, SEEK_SET);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    const std::size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (got != bytes.size()) throw IoError("short read on " + path.string());
    return bytes;
}

void write_binary_file(const std::filesystem::path& path, const void* data, std::size_t size) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw IoError("cannot create " + path.string());
    const std::size_t put = size == 0 ? 0 : std::fwrite(data, 1, size, f);
    const int closed = std::fclose(f);
    if (put != size || closed != 0) throw IoError("short write on " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_binary_file(path, text.data(), text.size());
}

namespace {

constexpr std::uint32_t kTensorVersion = 1;

} // namespace

void write_uefm(const std::filesystem::path& path, const FeatureMapSet& maps) {
    if (maps.maps.channels != static_cast<int>(maps.channel_names.size())) {
        throw std::invalid_argument("uefm: channel count does not match manifest");
    }
    detail::ByteWriter w;
    w.magic("UEFM");
    w.u32(kTensorVersion);
    w.u32(static_cast<std::uint32_t>(maps.maps.width));
    w.u32(static_cast<std::uint32_t>(maps.maps.height));
    w.u32(static_cast<std::uint32_t>(maps.maps.channels));
    for (const auto& name : maps.channel_names) w.str(name);
    for (double v : maps.maps.data) w.f32(static_cast<float>(v));
    write_binary_file(path, w.bytes.data(), w.bytes.size());
}

FeatureMapSet read_uefm(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    detail::ByteReader r(bytes.data(), bytes.size(), path.string());
    r.magic("UEFM");
    const std::uint32_t version = r.u32("version");
    if (version != kTensorVersion) {
        throw ParseError(path.string() + ": unsupported UEFM version " + std::to_string(version));
    }
    FeatureMapSet maps;
    const std::uint32_t width = r.u32("width");
    const std::uint32_t height = r.u32("height");
    const std::uint32_t channels = r.u32("channels");
    if (width == 0 || height == 0 || channels == 0 ||
        static_cast<std::uint64_t>(width) * height * channels > (1u << 30)) {
        throw ParseError(path.string() + ": implausible dimensions at byte 8");
    }
    for (std::uint32_t c = 0; c < channels; ++c) {
        maps.channel_names.push_back(r.str("channel name"));
    }
    maps.maps = ImageBuffer(static_cast<int>(width), static_cast<int>(height),
                            static_cast<int>(channels));
    for (auto& v : maps.maps.data) v = static_cast<double>(r.f32("pixel data"));
    r.expect_end();
    return maps;
}

void write_uecl(const std::filesystem::path& path, const ContributionLog& log) {
    detail::ByteWriter w;
    w.magic("UECL");
    w.u32(kTensorVersion);
    w.u32(static_cast<std::uint32_t>(log.width));
    w.u32(static_cast<std::uint32_t>(log.height));
    w.u32(static_cast<std::uint32_t>(log.per_gaussian.size()));
    for (const auto& entries : log.per_gaussian) {
        w.u32(static_cast<std::uint32_t>(entries.size()));
        for (const auto& e : entries) {
            w.u32(e.pixel);
            w.f64(e.alpha);
            w.f64(e.transmittance);
        }
    }
    write_binary_file(path, w.bytes.data(), w.bytes.size());
}

ContributionLog read_uecl(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    detail::ByteReader r(bytes.data(), bytes.size(), path.string());
    r.magic("UECL");
    const std::uint32_t version = r.u32("version");
    if (version != kTensorVersion) {
        throw ParseError(path.string() + ": unsupported UECL version " + std::to_string(version));
    }
    ContributionLog log;
    log.width = static_cast<int>(r.u32("width"));
    log.height = static_cast<int>(r.u32("height"));
    const std::uint32_t n = r.u32("gaussian count");
    const std::uint64_t pixels =
        static_cast<std::uint64_t>(log.width) * static_cast<std::uint64_t>(log.height);
    log.per_gaussian.resize(n);
    for (std::uint32_t g = 0; g < n; ++g) {
        const std::uint32_t count = r.u32("entry count");
        log.per_gaussian[g].resize(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            PixelContribution& e = log.per_gaussian[g][i];
            e.pixel = r.u32("pixel index");
            if (e.pixel >= pixels) {
                throw ParseError(path.string() + ": pixel index out of bounds at byte " +
                                 std::to_string(r.offset() - 4));
            }
            e.alpha = r.f64("alpha");
            e.transmittance = r.f64("transmittance");
        }
    }
    r.expect_end();
    return log;
}

void write_uepr(const std::filesystem::path& path,
                const std::vector<PrimitiveRepresentation>& reps) {
    detail::ByteWriter w;
    w.magic("UEPR");
    w.u32(kTensorVersion);
    w.u32(static_cast<std::uint32_t>(reps.size()));
    for (const auto& rep : reps) {
        w.str(rep.channel_name());
        w.u8(rep.directional ? 1 : 0);
        w.f64(rep.kappa);
        w.i32(rep.sh_degree);
        w.u32(static_cast<std::uint32_t>(rep.primitive_count()));
        if (rep.directional) {
            const int coeffs = sh_coeff_count(rep.sh_degree);
            for (const auto& sh : rep.sh) {
                if (sh.size() != coeffs) {
                    throw std::invalid_argument("uepr: SH length does not match degree");
                }
                for (Eigen::Index i = 0; i < sh.size(); ++i) w.f64(sh[i]);
            }
        } else {
            for (double v : rep.values) w.f64(v);
        }
    }
    write_binary_file(path, w.bytes.data(), w.bytes.size());
}

std::vector<PrimitiveRepresentation> read_uepr(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    detail::ByteReader r(bytes.data(), bytes.size(), path.string());
    r.magic("UEPR");
    const std::uint32_t version = r.u32("version");
    if (version != kTensorVersion) {
        throw ParseError(path.string() + ": unsupported UEPR version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32("representation count");
    std::vector<PrimitiveRepresentation> reps(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        PrimitiveRepresentation& rep = reps[i];
        rep.name_override = r.str("channel name");
        rep.directional = r.u8("directional flag") != 0;
        rep.kappa = r.f64("kappa");
        rep.sh_degree = r.i32("sh degree");
        if (rep.sh_degree < 0 || rep.sh_degree > kMaxShDegree) {
            throw ParseError(path.string() + ": sh degree out of range at byte " +
                             std::to_string(r.offset() - 4));
        }
        const std::uint32_t primitives = r.u32("primitive count");
        if (rep.directional) {
            const int coeffs = sh_coeff_count(rep.sh_degree);
            rep.sh.resize(primitives);
            for (auto& sh : rep.sh) {
                sh.resize(coeffs);
                for (Eigen::Index j = 0; j < coeffs; ++j) sh[j] = r.f64("sh coefficient");
            }
        } else {
            rep.values.resize(primitives);
            for (auto& v : rep.values) v = r.f64("value");
        }
    }
    r.expect_end();
    return reps;
}

} // namespace uegs
