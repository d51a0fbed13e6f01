#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uegs/render.hpp"
#include "uegs/representations.hpp"
#include "uegs/types.hpp"

namespace uegs {

/// Malformed file contents; what() names the offending field and, for binary
/// formats, the byte offset.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (missing file, short read, unwritable path).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- images --

/// PNG color image as doubles in [0,1]. Grayscale and alpha inputs are
/// expanded/stripped to 3 channels; 8- and 16-bit depths are accepted.
ImageBuffer read_png(const std::filesystem::path& path);
/// 1-channel 0/1 mask from a PNG: nonzero first channel means included.
ImageBuffer read_mask_png(const std::filesystem::path& path);
/// Clamps to [0,1] and quantizes; bit_depth must be 8 or 16.
void write_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth = 8);
void write_mask_png(const std::filesystem::path& path, const ImageBuffer& mask);

/// Little-endian grayscale PFM ("Pf"), bottom row first in the file.
ImageBuffer read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const ImageBuffer& image);

// -------------------------------------------------------- float tensors --

/// UEFM: "UEFM" magic, version/width/height/channels u32, length-prefixed
/// channel names, then f32 data row-major channel-interleaved. All fields
/// little-endian; file → memory → file is byte-identical.
void write_uefm(const std::filesystem::path& path, const FeatureMapSet& maps);
FeatureMapSet read_uefm(const std::filesystem::path& path);

/// UECL: per-view contribution log ("UECL" magic, f64 alpha/transmittance).
void write_uecl(const std::filesystem::path& path, const ContributionLog& log);
ContributionLog read_uecl(const std::filesystem::path& path);

/// UEPR: a set of per-Gaussian representations, scalar or SH-encoded.
void write_uepr(const std::filesystem::path& path,
                const std::vector<PrimitiveRepresentation>& reps);
std::vector<PrimitiveRepresentation> read_uepr(const std::filesystem::path& path);

// ----------------------------------------------------------------- scene --

/// 3DGS-format binary little-endian PLY. Stored opacity is a logit and
/// scales are logs; loading applies sigmoid/exp and normalizes quaternions.
/// SH degree is inferred from the f_rest property count.
GaussianScene read_gaussian_ply(const std::filesystem::path& path);
void write_gaussian_ply(const std::filesystem::path& path, const GaussianScene& scene);

/// cameras.json: ordered records with intrinsics, row-major rotation,
/// translation and the view role.
struct CameraRecord {
    std::string id;
    Camera camera;
    ViewRole role = ViewRole::Train;
};

std::vector<CameraRecord> read_cameras_json(const std::filesystem::path& path);
void write_cameras_json(const std::filesystem::path& path, const ViewSet& views);

/// A pipeline input directory: scene.ply + cameras.json + images/ holding
/// <id>.png (required), <id>.pfm depth and <id>.mask.png (both optional).
struct SceneBundle {
    GaussianScene scene;
    ViewSet views;
    std::filesystem::path root;
};

SceneBundle load_scene_bundle(const std::filesystem::path& dir);

// -------------------------------------------------------- run manifests --

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a 64-bit over the resolved configuration and the bytes of every
/// input file, so the hash changes exactly when a flag or input changes.
std::string config_hash(const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& config,
                        const std::vector<std::filesystem::path>& inputs);

/// Writes <artifact>.manifest.json (or run-manifest.json inside a directory
/// artifact) recording the command, configuration, inputs and config hash.
void write_run_manifest(const std::filesystem::path& artifact, const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& config,
                        const std::vector<std::filesystem::path>& inputs);

// --------------------------------------------------------------- helpers --

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, const void* data, std::size_t size);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace uegs
