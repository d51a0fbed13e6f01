#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "io_binary.hpp"
#include "uegs/io.hpp"
#include "uegs/sh.hpp"

namespace uegs {

namespace {

using json = nlohmann::json;

// Destination slots for the known 3DGS vertex properties.
enum class PlyField {
    X, Y, Z,
    Nx, Ny, Nz, // present in 3DGS exports, ignored
    FDc0, FDc1, FDc2,
    FRest,
    Opacity,
    Scale0, Scale1, Scale2,
    Rot0, Rot1, Rot2, Rot3,
};

struct PlyProperty {
    PlyField field;
    int rest_index = -1; // for FRest: the k of f_rest_k
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
    const double clamped = std::min(1.0 - 1e-7, std::max(1e-7, p));
    return std::log(clamped / (1.0 - clamped));
}

} // namespace

GaussianScene read_gaussian_ply(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    const std::string name = path.string();

    // --- header ---------------------------------------------------------
    std::size_t pos = 0;
    auto read_line = [&]() {
        const std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) {
            throw ParseError(name + ": header not terminated (at byte " + std::to_string(start) +
                             ")");
        }
        std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos));
        ++pos; // consume the newline
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return std::make_pair(line, start);
    };

    {
        const auto [line, at] = read_line();
        if (line != "ply") throw ParseError(name + ": not a PLY file (at byte " +
                                            std::to_string(at) + ")");
    }
    {
        const auto [line, at] = read_line();
        if (line != "format binary_little_endian 1.0") {
            throw ParseError(name + ": unsupported format '" + line + "' (at byte " +
                             std::to_string(at) + ")");
        }
    }

    static const std::map<std::string, PlyField> kKnown = {
        {"x", PlyField::X},           {"y", PlyField::Y},           {"z", PlyField::Z},
        {"nx", PlyField::Nx},         {"ny", PlyField::Ny},         {"nz", PlyField::Nz},
        {"f_dc_0", PlyField::FDc0},   {"f_dc_1", PlyField::FDc1},   {"f_dc_2", PlyField::FDc2},
        {"opacity", PlyField::Opacity},
        {"scale_0", PlyField::Scale0}, {"scale_1", PlyField::Scale1}, {"scale_2", PlyField::Scale2},
        {"rot_0", PlyField::Rot0},    {"rot_1", PlyField::Rot1},    {"rot_2", PlyField::Rot2},
        {"rot_3", PlyField::Rot3},
    };

    long vertex_count = -1;
    std::vector<PlyProperty> properties;
    bool in_vertex_element = false;
    while (true) {
        const auto [line, at] = read_line();
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment" || word == "obj_info") continue;
        if (word == "element") {
            std::string elem;
            long count = 0;
            ls >> elem >> count;
            if (elem == "vertex") {
                vertex_count = count;
                in_vertex_element = true;
            } else if (count == 0) {
                in_vertex_element = false;
            } else {
                throw ParseError(name + ": unsupported element '" + elem + "' (at byte " +
                                 std::to_string(at) + ")");
            }
            continue;
        }
        if (word == "property") {
            if (!in_vertex_element) continue; // properties of an empty element
            std::string type, prop;
            ls >> type >> prop;
            if (type != "float") {
                throw ParseError(name + ": property '" + prop + "' has type '" + type +
                                 "', expected float (at byte " + std::to_string(at) + ")");
            }
            if (prop.rfind("f_rest_", 0) == 0) {
                int k;
                try {
                    k = std::stoi(prop.substr(7));
                } catch (const std::exception&) {
                    throw ParseError(name + ": malformed property '" + prop + "' (at byte " +
                                     std::to_string(at) + ")");
                }
                properties.push_back(PlyProperty{PlyField::FRest, k});
            } else {
                auto it = kKnown.find(prop);
                if (it == kKnown.end()) {
                    throw ParseError(name + ": unknown property '" + prop + "' (at byte " +
                                     std::to_string(at) + ")");
                }
                properties.push_back(PlyProperty{it->second, -1});
            }
            continue;
        }
        throw ParseError(name + ": unexpected header line '" + line + "' (at byte " +
                         std::to_string(at) + ")");
    }
    if (vertex_count < 0) throw ParseError(name + ": no vertex element in header");

    // --- layout checks --------------------------------------------------
    std::map<PlyField, int> slot; // field -> property index
    int rest_count = 0;
    std::vector<int> rest_slots;
    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (properties[i].field == PlyField::FRest) {
            ++rest_count;
        } else if (!slot.emplace(properties[i].field, static_cast<int>(i)).second) {
            throw ParseError(name + ": duplicate property in header");
        }
    }
    for (PlyField required :
         {PlyField::X, PlyField::Y, PlyField::Z, PlyField::FDc0, PlyField::FDc1, PlyField::FDc2,
          PlyField::Opacity, PlyField::Scale0, PlyField::Scale1, PlyField::Scale2, PlyField::Rot0,
          PlyField::Rot1, PlyField::Rot2, PlyField::Rot3}) {
        if (slot.find(required) == slot.end()) {
            throw ParseError(name + ": missing required vertex property");
        }
    }
    rest_slots.assign(static_cast<std::size_t>(std::max(0, rest_count)), -1);
    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (properties[i].field != PlyField::FRest) continue;
        const int k = properties[i].rest_index;
        if (k < 0 || k >= rest_count || rest_slots[static_cast<std::size_t>(k)] != -1) {
            throw ParseError(name + ": f_rest indices are not contiguous from 0");
        }
        rest_slots[static_cast<std::size_t>(k)] = static_cast<int>(i);
    }
    if (rest_count % 3 != 0) {
        throw ParseError(name + ": f_rest count " + std::to_string(rest_count) +
                         " is not divisible by 3");
    }
    const int rest_per_channel = rest_count / 3;
    int degree = -1;
    for (int l = 0; l <= kMaxShDegree; ++l) {
        if (sh_coeff_count(l) - 1 == rest_per_channel) degree = l;
    }
    if (degree < 0) {
        throw ParseError(name + ": f_rest count " + std::to_string(rest_count) +
                         " does not correspond to an SH degree <= " +
                         std::to_string(kMaxShDegree));
    }
    const int n_coeffs = sh_coeff_count(degree);

    // --- payload --------------------------------------------------------
    const std::size_t stride = properties.size() * 4;
    if (bytes.size() - pos < static_cast<std::size_t>(vertex_count) * stride) {
        throw ParseError(name + ": vertex data truncated at byte " +
                         std::to_string(bytes.size()) + ", expected " +
                         std::to_string(pos + static_cast<std::size_t>(vertex_count) * stride) +
                         " bytes");
    }
    detail::ByteReader r(bytes.data() + pos, bytes.size() - pos, name);

    GaussianScene scene;
    scene.gaussians.resize(static_cast<std::size_t>(vertex_count));
    std::vector<float> record(properties.size());
    for (long v = 0; v < vertex_count; ++v) {
        const std::size_t record_at = pos + static_cast<std::size_t>(v) * stride;
        for (auto& value : record) value = r.f32("vertex data");
        auto field = [&](PlyField f) { return static_cast<double>(record[static_cast<std::size_t>(slot.at(f))]); };

        GaussianPrimitive& g = scene.gaussians[static_cast<std::size_t>(v)];
        g.mean = Eigen::Vector3d(field(PlyField::X), field(PlyField::Y), field(PlyField::Z));
        g.scale = Eigen::Vector3d(std::exp(field(PlyField::Scale0)),
                                  std::exp(field(PlyField::Scale1)),
                                  std::exp(field(PlyField::Scale2)));
        Eigen::Vector4d q(field(PlyField::Rot0), field(PlyField::Rot1), field(PlyField::Rot2),
                          field(PlyField::Rot3));
        if (!q.allFinite() || q.norm() < 1e-12) {
            throw ParseError(name + ": degenerate quaternion in vertex " + std::to_string(v) +
                             " (record at byte " + std::to_string(record_at) + ")");
        }
        q.normalize();
        g.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
        g.opacity = sigmoid(field(PlyField::Opacity));
        g.sh_color.assign(3, Eigen::VectorXd::Zero(n_coeffs));
        g.sh_color[0][0] = field(PlyField::FDc0);
        g.sh_color[1][0] = field(PlyField::FDc1);
        g.sh_color[2][0] = field(PlyField::FDc2);
        for (int c = 0; c < 3; ++c) {
            for (int j = 1; j < n_coeffs; ++j) {
                const int k = c * rest_per_channel + (j - 1); // channel-major f_rest layout
                g.sh_color[static_cast<std::size_t>(c)][j] = static_cast<double>(
                    record[static_cast<std::size_t>(rest_slots[static_cast<std::size_t>(k)])]);
            }
        }
        if (!g.mean.allFinite() || !g.scale.allFinite() || !(g.scale.minCoeff() > 0.0)) {
            throw ParseError(name + ": non-finite vertex " + std::to_string(v) +
                             " (record at byte " + std::to_string(record_at) + ")");
        }
    }
    return scene;
}

void write_gaussian_ply(const std::filesystem::path& path, const GaussianScene& scene) {
    int n_coeffs = 1;
    if (!scene.empty()) {
        if (scene.gaussians[0].sh_color.size() != 3) {
            throw std::invalid_argument("ply: every primitive needs 3 SH channels");
        }
        n_coeffs = static_cast<int>(scene.gaussians[0].sh_color[0].size());
    }
    const int rest_per_channel = n_coeffs - 1;
    for (const auto& g : scene.gaussians) {
        if (g.sh_color.size() != 3 || g.sh_color[0].size() != n_coeffs ||
            g.sh_color[1].size() != n_coeffs || g.sh_color[2].size() != n_coeffs) {
            throw std::invalid_argument("ply: inconsistent SH coefficient counts");
        }
    }

    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n";
    header << "element vertex " << scene.size() << "\n";
    for (const char* p : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        header << "property float " << p << "\n";
    }
    for (int k = 0; k < 3 * rest_per_channel; ++k) header << "property float f_rest_" << k << "\n";
    for (const char* p : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
                          "rot_3"}) {
        header << "property float " << p << "\n";
    }
    header << "end_header\n";

    detail::ByteWriter w;
    const std::string h = header.str();
    w.bytes.assign(h.begin(), h.end());
    for (const auto& g : scene.gaussians) {
        for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(g.mean[a]));
        for (int a = 0; a < 3; ++a) w.f32(0.0f); // normals, unused
        for (int c = 0; c < 3; ++c) w.f32(static_cast<float>(g.sh_color[static_cast<std::size_t>(c)][0]));
        for (int c = 0; c < 3; ++c) {
            for (int j = 1; j < n_coeffs; ++j) {
                w.f32(static_cast<float>(g.sh_color[static_cast<std::size_t>(c)][j]));
            }
        }
        w.f32(static_cast<float>(logit(g.opacity)));
        for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(std::log(g.scale[a])));
        w.f32(static_cast<float>(g.rotation.w()));
        w.f32(static_cast<float>(g.rotation.x()));
        w.f32(static_cast<float>(g.rotation.y()));
        w.f32(static_cast<float>(g.rotation.z()));
    }
    write_binary_file(path, w.bytes.data(), w.bytes.size());
}

std::vector<CameraRecord> read_cameras_json(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("cameras") || !j["cameras"].is_array()) {
        throw ParseError(path.string() + ": missing 'cameras' array");
    }
    std::vector<CameraRecord> records;
    try {
        for (const json& c : j["cameras"]) {
            CameraRecord rec;
            rec.id = c.at("id").get<std::string>();
            rec.camera.fx = c.at("fx").get<double>();
            rec.camera.fy = c.at("fy").get<double>();
            rec.camera.cx = c.at("cx").get<double>();
            rec.camera.cy = c.at("cy").get<double>();
            rec.camera.width = c.at("width").get<int>();
            rec.camera.height = c.at("height").get<int>();
            const auto rot = c.at("rotation").get<std::vector<double>>();
            const auto trans = c.at("translation").get<std::vector<double>>();
            if (rot.size() != 9 || trans.size() != 3) {
                throw ParseError(path.string() + ": camera '" + rec.id +
                                 "': rotation must have 9 entries and translation 3");
            }
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 3; ++k) {
                    rec.camera.rotation(i, k) = rot[static_cast<std::size_t>(i * 3 + k)];
                }
                rec.camera.translation[i] = trans[static_cast<std::size_t>(i)];
            }
            rec.role = view_role_from_string(c.at("role").get<std::string>());
            records.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return records;
}

void write_cameras_json(const std::filesystem::path& path, const ViewSet& views) {
    json cameras = json::array();
    for (const View& view : views.views) {
        json c;
        c["id"] = view.id;
        c["fx"] = view.camera.fx;
        c["fy"] = view.camera.fy;
        c["cx"] = view.camera.cx;
        c["cy"] = view.camera.cy;
        c["width"] = view.camera.width;
        c["height"] = view.camera.height;
        std::vector<double> rot(9), trans(3);
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 3; ++k) rot[static_cast<std::size_t>(i * 3 + k)] = view.camera.rotation(i, k);
            trans[static_cast<std::size_t>(i)] = view.camera.translation[i];
        }
        c["rotation"] = rot;
        c["translation"] = trans;
        c["role"] = to_string(view.role);
        cameras.push_back(std::move(c));
    }
    json doc;
    doc["cameras"] = std::move(cameras);
    write_text_file(path, doc.dump(2) + "\n");
}

SceneBundle load_scene_bundle(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("scene bundle directory not found: " + dir.string());
    }
    SceneBundle bundle;
    bundle.root = dir;
    bundle.scene = read_gaussian_ply(dir / "scene.ply");
    const auto records = read_cameras_json(dir / "cameras.json");
    const auto images = dir / "images";
    for (const auto& rec : records) {
        View view;
        view.id = rec.id;
        view.camera = rec.camera;
        view.role = rec.role;
        const auto color_path = images / (rec.id + ".png");
        if (!std::filesystem::exists(color_path)) {
            throw IoError("scene bundle: missing color image " + color_path.string());
        }
        view.gt_color = read_png(color_path);
        const auto depth_path = images / (rec.id + ".pfm");
        if (std::filesystem::exists(depth_path)) view.gt_depth = read_pfm(depth_path);
        const auto mask_path = images / (rec.id + ".mask.png");
        if (std::filesystem::exists(mask_path)) view.mask = read_mask_png(mask_path);
        bundle.views.views.push_back(std::move(view));
    }
    try {
        bundle.views.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(dir.string() + ": " + e.what());
    }
    return bundle;
}

namespace {

void fnv1a(std::uint64_t& hash, const void* data, std::size_t size) {
    const auto* bytes = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= bytes[i];
        hash *= 1099511628211ULL;
    }
}

void fnv1a_str(std::uint64_t& hash, const std::string& s) {
    fnv1a(hash, s.data(), s.size());
    const char zero = '\0';
    fnv1a(hash, &zero, 1);
}

/// Directories expand to their regular files sorted by path, so a directory
/// input hashes as the concatenation of its contents.
std::vector<std::filesystem::path> expand_input(const std::filesystem::path& input) {
    if (!std::filesystem::is_directory(input)) return {input};
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(input)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

} // namespace

std::string config_hash(const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& config,
                        const std::vector<std::filesystem::path>& inputs) {
    std::uint64_t hash = 14695981039346656037ULL;
    fnv1a_str(hash, command);
    for (const auto& [key, value] : config) fnv1a_str(hash, key + "=" + value);
    for (const auto& input : inputs) {
        for (const auto& file : expand_input(input)) {
            fnv1a_str(hash, file.string());
            const auto bytes = read_binary_file(file);
            fnv1a(hash, bytes.data(), bytes.size());
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

void write_run_manifest(const std::filesystem::path& artifact, const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& config,
                        const std::vector<std::filesystem::path>& inputs) {
    json doc;
    doc["tool"] = "uegs";
    doc["version"] = kToolVersion;
    doc["command"] = command;
    json cfg = json::object();
    for (const auto& [key, value] : config) cfg[key] = value;
    doc["config"] = std::move(cfg);
    std::vector<std::string> input_strings;
    for (const auto& input : inputs) input_strings.push_back(input.string());
    doc["inputs"] = input_strings;
    doc["config_hash"] = config_hash(command, config, inputs);

    const auto path = std::filesystem::is_directory(artifact)
                          ? artifact / "run-manifest.json"
                          : std::filesystem::path(artifact.string() + ".manifest.json");
    write_text_file(path, doc.dump(2) + "\n");
}

} // namespace uegs
