#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "uegs/render.hpp"
#include "uegs/representations.hpp"
#include "uegs/types.hpp"

namespace uegs {

/// Seeded uniform/normal generator on top of mt19937_64 with a fixed
/// bit-to-double mapping, so streams are identical across platforms and
/// standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller; values come out in pairs.
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SynthDegradation {
    enum class Mode { None, DropFraction, JitterMeans, OpacityNoise };
    Mode mode = Mode::DropFraction;
    double amount = 0.3; // fraction p for drops, sigma for the noise modes
};

/// Parameters of the generated scene: Gaussians in a ball, cameras on one to
/// three rings looking at the origin.
struct SynthSpec {
    std::uint64_t seed = 0;
    int n_gaussians = 500;
    double world_radius = 1.0;
    int camera_count = 12;
    double ring_radius = 3.5;
    std::vector<double> ring_heights = {0.7, 1.6}; // cameras alternate between rings
    int image_width = 128;
    int image_height = 128;
    double focal = 110.0;
    SynthDegradation degradation;

    void validate() const;
};

struct SynthResult {
    GaussianScene truth;
    GaussianScene degraded;
    ViewSet views; // gt color and depth rendered from the truth scene
};

/// Deterministic scene + view generation. Every 4th camera is held out; the
/// first holdout view fits the regressor, the rest are evaluation-only.
SynthResult generate(const SynthSpec& spec, const RenderParams& params = {});

/// Per-view reconstruction error of the degraded scene against the views'
/// ground truth: the degraded scene is rendered into every camera and
/// compared with pixel_error_map.
struct GroundTruthErrors {
    std::vector<ErrorMap> color; // one per view
    std::vector<ErrorMap> depth;
};

GroundTruthErrors error_ground_truth(const ViewSet& views, const GaussianScene& degraded,
                                     const RenderParams& params = {});

} // namespace uegs
