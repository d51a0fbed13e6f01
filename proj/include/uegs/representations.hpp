#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "uegs/render.hpp"
#include "uegs/types.hpp"

namespace uegs {

enum class RepKind { FovCounter, Visibility, Error };
enum class Agg { Max, Sum, Mean };

std::string to_string(Agg agg);
Agg agg_from_string(const std::string& s);

/// Per-Gaussian uncertainty representation: one scalar per Gaussian, or one
/// SH coefficient vector per Gaussian for the direction-dependent variants.
struct PrimitiveRepresentation {
    RepKind kind = RepKind::Visibility;
    Agg agg = Agg::Max;
    bool include_alpha = true;
    bool directional = false;
    double kappa = 0.0;   // vMF concentration, directional only
    int sh_degree = 0;    // directional only
    std::vector<double> values;          // size = primitive count (scalar form)
    std::vector<Eigen::VectorXd> sh;     // size = primitive count (directional form)
    std::string name_override;           // set for channels outside the vis/err family

    std::string channel_name() const;
    std::size_t primitive_count() const { return directional ? sh.size() : values.size(); }
};

/// The canonical 13-channel manifest: FoV counter first, then the six
/// visibility channels, then the six error channels (max/sum/mean, each with
/// and without alpha). Directional channels carry a "-dir" suffix.
std::vector<std::string> standard_channel_names(bool directional);

struct FeatureMapSet {
    ImageBuffer maps; // channel-interleaved
    std::vector<std::string> channel_names;

    void validate() const;
};

/// Number of training cameras whose slightly extended frustum (margin as a
/// fraction of the image extent on each side) contains each Gaussian mean.
PrimitiveRepresentation fov_counter(const GaussianScene& scene,
                                    const std::vector<Camera>& cameras, double margin = 0.1,
                                    double near_plane = 0.01);

/// Per-view pixel aggregation of contribution weights, one row per view and
/// one column per Gaussian. Weight is alpha*T with include_alpha, else T.
/// A Gaussian with no logged pixels in a view gets 0 for that view.
std::vector<std::vector<double>> per_view_visibility_aggregates(
    const std::vector<const ContributionLog*>& logs, Agg agg, bool include_alpha);

/// Same, with each pixel weight multiplied by the view's error value at the
/// pixel. error_maps must be 1-channel and match each log's dimensions.
std::vector<std::vector<double>> per_view_error_aggregates(
    const std::vector<const ContributionLog*>& logs,
    const std::vector<const ImageBuffer*>& error_maps, Agg agg, bool include_alpha);

/// Max over training views of the per-view aggregate.
PrimitiveRepresentation visibility_representation(
    const std::vector<const ContributionLog*>& logs, Agg agg, bool include_alpha);

/// Mean over training views of the error-weighted per-view aggregate. By
/// default the mean divides by the full view count; set
/// mean_over_visible_only to divide by the number of views where the
/// Gaussian is visible instead.
PrimitiveRepresentation error_representation(const std::vector<const ContributionLog*>& logs,
                                             const std::vector<const ImageBuffer*>& error_maps,
                                             Agg agg, bool include_alpha,
                                             bool mean_over_visible_only = false);

/// Rescaled von Mises-Fisher kernel exp(kappa * (nu.d) - kappa), in (0,1],
/// equal to 1 at d = nu or kappa = 0.
double vmf_weight(const Eigen::Vector3d& nu, const Eigen::Vector3d& d, double kappa);

/// Direction-dependent representation evaluated on a sphere sample set.
/// values[k][i] is Gaussian k's value at sample_dirs[i].
struct SampledSphereFunction {
    std::vector<Eigen::Vector3d> directions;
    std::vector<std::vector<double>> values;
};

/// Direction-dependent visibility (error_maps empty) or error representation:
/// the per-view aggregates weighted by the vMF kernel of the angle between
/// the view's forward axis and the query direction, combined by max (resp.
/// mean) over views.
SampledSphereFunction directional_representation(
    const std::vector<const ContributionLog*>& logs,
    const std::vector<const ImageBuffer*>& error_maps, // empty => visibility
    const std::vector<Eigen::Vector3d>& view_dirs, Agg agg, bool include_alpha, double kappa,
    const std::vector<Eigen::Vector3d>& sample_dirs, bool mean_over_visible_only = false);

/// SH-encodes a sampled sphere function (least-squares fit per Gaussian).
PrimitiveRepresentation encode_directional(const SampledSphereFunction& sampled, RepKind kind,
                                           Agg agg, bool include_alpha, double kappa,
                                           int degree = 4);

struct RepresentationConfig {
    double frustum_margin = 0.1;
    bool directional = false;
    double kappa = 8.0;
    int sh_degree = 4;
    int sphere_samples = 256;
    bool mean_over_visible_only = false;
    double near_plane = 0.01;
};

/// Builds the canonical 13 representations in manifest order. cameras, logs
/// and error_maps describe the training views, index-aligned.
std::vector<PrimitiveRepresentation> build_feature_representations(
    const GaussianScene& scene, const std::vector<Camera>& cameras,
    const std::vector<const ContributionLog*>& logs,
    const std::vector<const ImageBuffer*>& error_maps, const RepresentationConfig& cfg = {});

/// Renders an ordered set of representations into one multi-channel image.
/// Scalar representations render as per-Gaussian constants; SH-encoded ones
/// are evaluated at the per-Gaussian view direction and clamped at 0.
FeatureMapSet render_feature_maps(const GaussianScene& scene,
                                  const std::vector<PrimitiveRepresentation>& representations,
                                  const Camera& camera, const RenderParams& params = {});

/// Per-pixel L1 reconstruction error: channel mean of |gt - rendered| for
/// color, |gt - rendered| for depth. valid is 0 where a depth ground truth
/// is missing (<= 0 or non-finite), 1 elsewhere.
struct ErrorMap {
    ImageBuffer map;   // 1 channel
    ImageBuffer valid; // 1 channel, 0/1
};

ErrorMap pixel_error_map(const ImageBuffer& gt, const ImageBuffer& rendered);

} // namespace uegs
