#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uegs/types.hpp"

namespace uegs {

/// Sample Pearson correlation. Returns nullopt when either side is constant
/// (undefined correlation; pipeline callers score such views as 0).
/// Throws when fewer than two values are given.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Image overload over unmasked pixels (mask nonzero = included).
std::optional<double> pearson(const ImageBuffer& pred, const ImageBuffer& truth,
                              const ImageBuffer* mask = nullptr);

struct SparsificationResult {
    std::vector<double> fractions;
    std::vector<double> oracle_curve;      // remove by descending error
    std::vector<double> uncertainty_curve; // remove by descending uncertainty
    double ause = 0.0;
};

/// Sparsification curves of the MAE when the top fraction of pixels by
/// uncertainty (resp. by error, the oracle) is removed, after rescaling the
/// error to unit sum. ause is the trapezoidal area between the curves over
/// the fraction grid {0, 1/steps, ..., (steps-1)/steps}; ceil(f*N) pixels
/// are removed per step, descending-value ties broken by pixel index.
SparsificationResult sparsification(const ImageBuffer& err, const ImageBuffer& unc,
                                    const ImageBuffer* mask = nullptr, int steps = 100);

struct ViewMetrics {
    std::string view_id;
    std::string scene;
    std::string target; // "depth" or "render"
    double pearson = 0.0;
    double ause = 0.0;
};

struct ReportRow {
    std::string label; // view id or aggregate label
    std::string scene;
    std::string target;
    double pearson = 0.0;
    double ause = 0.0;
};

struct Report {
    std::vector<ReportRow> rows; // per-view rows then per-scene means then overall mean
    int excluded_views = 0;      // views without the required ground truth
};

/// Per-scene and overall means of Pearson and AUSE.
Report aggregate_metrics(const std::vector<ViewMetrics>& per_view, int excluded_views = 0);

/// Comma-separated table with header "view_id,scene,target,pearson,ause".
std::string metrics_csv(const Report& report);

} // namespace uegs
