#include "uegs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace uegs {

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double da = a[i] - mean_a, db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
    return cov / std::sqrt(var_a * var_b);
}

namespace {

void gather_unmasked(const ImageBuffer& a, const ImageBuffer& b, const ImageBuffer* mask,
                     std::vector<double>& va, std::vector<double>& vb) {
    if (a.width != b.width || a.height != b.height || a.channels != 1 || b.channels != 1)
        throw std::invalid_argument("metrics: expected matching 1-channel images");
    if (mask && (mask->width != a.width || mask->height != a.height))
        throw std::invalid_argument("metrics: mask dimension mismatch");
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (mask && mask->data[p] == 0.0) continue;
        va.push_back(a.data[p]);
        vb.push_back(b.data[p]);
    }
}

} // namespace

std::optional<double> pearson(const ImageBuffer& pred, const ImageBuffer& truth,
                              const ImageBuffer* mask) {
    std::vector<double> a, b;
    gather_unmasked(pred, truth, mask, a, b);
    return pearson(a, b);
}

SparsificationResult sparsification(const ImageBuffer& err, const ImageBuffer& unc,
                                    const ImageBuffer* mask, int steps) {
    std::vector<double> e, u;
    gather_unmasked(err, unc, mask, e, u);
    const std::size_t n = e.size();
    if (n == 0) throw std::invalid_argument("sparsification: all pixels masked");
    if (static_cast<int>(n) < steps)
        throw std::invalid_argument("sparsification: need at least `steps` unmasked pixels");
    for (double v : e)
        if (v < 0.0) throw std::invalid_argument("sparsification: error map must be >= 0");

    // Per-view rescale: total error 1.
    double total = std::accumulate(e.begin(), e.end(), 0.0);
    if (total > 0.0)
        for (double& v : e) v /= total;

    // Removal orders, descending value, ties by pixel index.
    auto order_desc = [n](const std::vector<double>& key) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&key](std::size_t i, std::size_t j) {
            if (key[i] != key[j]) return key[i] > key[j];
            return i < j;
        });
        return idx;
    };
    auto prefix_removed = [&e, n](const std::vector<std::size_t>& order) {
        std::vector<double> prefix(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + e[order[i]];
        return prefix;
    };
    const auto oracle_prefix = prefix_removed(order_desc(e));
    const auto unc_prefix = prefix_removed(order_desc(u));
    const double grand_total = oracle_prefix[n];

    SparsificationResult out;
    out.fractions.reserve(steps);
    out.oracle_curve.reserve(steps);
    out.uncertainty_curve.reserve(steps);
    for (int j = 0; j < steps; ++j) {
        double f = static_cast<double>(j) / steps;
        auto removed = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n)));
        std::size_t remaining = n - removed;
        out.fractions.push_back(f);
        out.oracle_curve.push_back((grand_total - oracle_prefix[removed]) / remaining);
        out.uncertainty_curve.push_back((grand_total - unc_prefix[removed]) / remaining);
    }

    double area = 0.0;
    for (int j = 0; j + 1 < steps; ++j) {
        double d0 = out.uncertainty_curve[j] - out.oracle_curve[j];
        double d1 = out.uncertainty_curve[j + 1] - out.oracle_curve[j + 1];
        area += 0.5 * (d0 + d1) / steps;
    }
    out.ause = area;
    return out;
}

Report aggregate_metrics(const std::vector<ViewMetrics>& per_view, int excluded_views) {
    Report report;
    report.excluded_views = excluded_views;
    // (scene, target) -> accumulators, in first-appearance order.
    std::vector<std::pair<std::string, std::string>> scene_order;
    std::map<std::pair<std::string, std::string>, std::pair<double, double>> sums;
    std::map<std::pair<std::string, std::string>, int> counts;
    for (const auto& m : per_view) {
        report.rows.push_back({m.view_id, m.scene, m.target, m.pearson, m.ause});
        auto key = std::make_pair(m.scene, m.target);
        if (counts.find(key) == counts.end()) scene_order.push_back(key);
        sums[key].first += m.pearson;
        sums[key].second += m.ause;
        counts[key] += 1;
    }
    std::map<std::string, std::pair<double, double>> overall;
    std::map<std::string, int> overall_counts;
    for (const auto& key : scene_order) {
        double p = sums[key].first / counts[key];
        double a = sums[key].second / counts[key];
        report.rows.push_back({"scene-mean", key.first, key.second, p, a});
        overall[key.second].first += p;
        overall[key.second].second += a;
        overall_counts[key.second] += 1;
    }
    for (const auto& [target, acc] : overall) {
        report.rows.push_back({"mean", "all", target, acc.first / overall_counts[target],
                               acc.second / overall_counts[target]});
    }
    return report;
}

std::string metrics_csv(const Report& report) {
    std::ostringstream out;
    out.precision(17);
    out << "view_id,scene,target,pearson,ause\n";
    for (const auto& r : report.rows)
        out << r.label << ',' << r.scene << ',' << r.target << ',' << r.pearson << ',' << r.ause
            << '\n';
    if (report.excluded_views > 0)
        out << "# excluded views without required ground truth: " << report.excluded_views
            << '\n';
    return out.str();
}

} // namespace uegs
