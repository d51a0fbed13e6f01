#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "uegs/render.hpp"
#include "uegs/representations.hpp"
#include "uegs/types.hpp"

namespace uegs {

/// Diagonal of the Fisher information of the rendering map, accumulated over
/// training views: per parameter, Σ_views Σ_pixels Σ_channels (∂C/∂θ)².
/// Color and opacity entries are analytic; mean/scale/rotation come from
/// central finite differences of the full render.
struct FisherDiagonal {
    int sh_degree = 0;
    std::vector<std::array<double, 3>> mean;
    std::vector<std::array<double, 3>> scale;
    std::vector<std::array<double, 4>> rotation;
    std::vector<double> opacity;
    std::vector<std::array<double, 3>> sh_dc; // one entry per color channel
    // Per Gaussian: 3·(coeff_count-1) entries, channel-major
    // (channel·(coeff_count-1) + coeff-1).
    std::vector<std::vector<double>> sh_rest;

    std::size_t size() const { return opacity.size(); }
    void validate() const; // every entry finite and >= 0
};

/// ∂C_channel/∂c_lm for one logged contribution: alpha·T·Y_lm per
/// coefficient, identical across color channels.
std::vector<double> color_param_gradient(double alpha, double transmittance,
                                         const std::vector<double>& sh_basis);

/// ∂C/∂g_k through the compositing chain at one pixel, for one channel.
/// contributions is the full composited splat sequence at the pixel, values
/// the per-contribution channel values, phi_k the Gaussian footprint factor
/// exp(-δᵀΣ̄⁻¹δ/2) of splat k (so alpha_k = g_k·phi_k when unclamped).
/// A clamped alpha does not respond to g, hence gradient 0.
double opacity_gradient(const std::vector<CompositedSplat>& contributions,
                        const std::vector<double>& values, std::size_t k, double phi_k,
                        bool clamped);

enum class GeomParamKind { Mean, Scale, Rotation };

struct GeomParam {
    GeomParamKind kind = GeomParamKind::Mean;
    int index = 0; // 0..2 for mean/scale, 0..3 for rotation (w,x,y,z)
};

/// Central finite difference of the color render w.r.t. one scalar geometric
/// parameter of one Gaussian; step is relative to the parameter magnitude
/// with an absolute floor of 1e-6. Perturbed quaternions are renormalized
/// before rendering, matching the forward pass convention.
ImageBuffer geometric_gradient_fd(const GaussianScene& scene, const Camera& cam,
                                  std::size_t gaussian_index, const GeomParam& param,
                                  double step_rel = 1e-4, const RenderParams& params = {});

/// Accumulates the Fisher diagonal over the given training cameras. The
/// geometric groups cost two full renders per (view, Gaussian, parameter)
/// and can be skipped when only the color-parameter baseline is needed.
FisherDiagonal fisher_diagonal(const GaussianScene& scene, const std::vector<Camera>& cameras,
                               bool include_geometric = true, const RenderParams& params = {});

/// Per-group uncertainty Σ 1/(fisher + eps), plus the plain FisherRF value
/// (sum over the two color-parameter groups). Group channel order:
/// fisher-mean, fisher-scale, fisher-rotation, fisher-opacity, fisher-sh-dc,
/// fisher-sh-rest; the plain channel is named fisherrf.
struct FisherUncertainty {
    std::vector<PrimitiveRepresentation> groups;
    PrimitiveRepresentation plain;
};

FisherUncertainty grouped_uncertainty(const FisherDiagonal& fisher, double eps = 1e-6);

std::vector<std::string> fisher_channel_names();

} // namespace uegs
