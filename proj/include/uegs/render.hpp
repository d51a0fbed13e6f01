#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "uegs/types.hpp"

namespace uegs {

/// Thresholds of the compositing loop. A splat whose opacity at the pixel is
/// below alpha_min is skipped and does not attenuate; traversal stops once
/// transmittance falls below t_stop.
struct RenderParams {
    double near_plane = 0.01;
    double dilation = 0.3;          // added to cov2d diagonal, px^2
    double alpha_clamp = 0.99;
    double alpha_min = 1.0 / 255.0;
    double t_stop = 1e-3;
};

/// 2D footprint of a projected Gaussian.
struct Splat2D {
    int gaussian_index = -1;
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();   // dilated
    Eigen::Matrix2d cov2d_inv = Eigen::Matrix2d::Identity();
    double depth = 0.0;       // camera-space z
    double opacity = 0.0;
    // Pixel rectangle of influence, inclusive, clamped to the image.
    // Empty (x0 > x1) when the footprint misses the image entirely.
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;

    bool bbox_empty() const { return x0 > x1 || y0 > y1; }
    bool covers(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// EWA projection of one primitive. Returns nullopt when the camera-space
/// depth is at or behind the near plane.
std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam,
                                        const RenderParams& params = {});

struct PixelContribution {
    std::uint32_t pixel = 0; // row-major y*width + x
    double alpha = 0.0;
    double transmittance = 0.0;
};

/// Per-view record of which Gaussian influenced which pixel with what weight.
/// Entries per Gaussian are sorted by pixel index; only entries passing the
/// alpha_min / t_stop thresholds appear.
struct ContributionLog {
    int width = 0, height = 0;
    std::vector<std::vector<PixelContribution>> per_gaussian;

    std::size_t entry_count() const;
};

// Channel sources for render_view.
struct ColorSource {};                       // SH color at the per-Gaussian view direction
struct DepthSource { bool normalized = false; };
struct ValueSource {
    // channel-major: values[c][k] is the constant value of Gaussian k in channel c
    const std::vector<std::vector<double>>* values = nullptr;
};
using ChannelSource = std::variant<ColorSource, DepthSource, ValueSource>;

struct RenderResult {
    ImageBuffer image;
    std::optional<ContributionLog> log;
};

/// Front-to-back compositing over all projected splats, globally sorted by
/// camera-space depth (ties by primitive index). Parallel over row chunks;
/// output is bitwise independent of the worker count.
RenderResult render_view(const GaussianScene& scene, const Camera& cam,
                         const ChannelSource& source, bool with_log = false,
                         const RenderParams& params = {});

/// Unoptimized per-pixel loop over every splat, no tiling, traversal down to
/// transmittance 1e-12. Same projection and alpha rules as render_view.
ImageBuffer reference_render(const GaussianScene& scene, const Camera& cam,
                             const ChannelSource& source, const RenderParams& params = {});

/// One composited splat at a pixel, in traversal order.
struct CompositedSplat {
    int gaussian_index;
    double alpha;
    double transmittance;
};

/// Single-channel compositing primitive: walks the depth-sorted splats at one
/// pixel and returns the blended value plus the surviving contributions.
/// splats must be sorted ascending by (depth, gaussian_index).
std::pair<double, std::vector<CompositedSplat>> composite_pixel(
    const std::vector<Splat2D>& sorted_splats, const Eigen::Vector2d& pixel,
    const std::vector<double>& channel_values, const RenderParams& params = {});

/// Sequential traversal handing each pixel's full composited splat sequence
/// (plus the per-splat channel values used) to fn. Used by the Fisher
/// accumulation and by conservation checks.
void for_each_pixel_contributions(
    const GaussianScene& scene, const Camera& cam,
    const std::function<void(int x, int y, const std::vector<CompositedSplat>&)>& fn,
    const RenderParams& params = {});

/// Per-Gaussian unit directions from the camera center to each mean, the
/// direction at which SH color and SH-encoded representations are evaluated.
std::vector<Eigen::Vector3d> per_gaussian_view_directions(const GaussianScene& scene,
                                                          const Camera& cam);

/// Projects the whole scene and returns splats sorted ascending by
/// (depth, gaussian_index); culled primitives are absent.
std::vector<Splat2D> project_sorted(const GaussianScene& scene, const Camera& cam,
                                    const RenderParams& params = {});

} // namespace uegs
