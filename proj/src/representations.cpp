#include "uegs/representations.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uegs/parallel.hpp"
#include "uegs/sh.hpp"

namespace uegs {

std::string to_string(Agg agg) {
    switch (agg) {
        case Agg::Max: return "max";
        case Agg::Sum: return "sum";
        case Agg::Mean: return "mean";
    }
    return "max";
}

Agg agg_from_string(const std::string& s) {
    if (s == "max") return Agg::Max;
    if (s == "sum") return Agg::Sum;
    if (s == "mean") return Agg::Mean;
    throw std::invalid_argument("unknown aggregation: " + s);
}

std::string PrimitiveRepresentation::channel_name() const {
    if (!name_override.empty()) return name_override;
    if (kind == RepKind::FovCounter) return "fov";
    std::string name = kind == RepKind::Visibility ? "vis" : "err";
    name += "-" + to_string(agg);
    name += include_alpha ? "-alpha" : "-noalpha";
    if (directional) name += "-dir";
    return name;
}

std::vector<std::string> standard_channel_names(bool directional) {
    std::vector<std::string> names{"fov"};
    const std::string suffix = directional ? "-dir" : "";
    for (const char* kind : {"vis", "err"})
        for (bool alpha : {true, false})
            for (const char* agg : {"max", "sum", "mean"})
                names.push_back(std::string(kind) + "-" + agg + (alpha ? "-alpha" : "-noalpha") +
                                suffix);
    return names;
}

void FeatureMapSet::validate() const {
    if (maps.channels != static_cast<int>(channel_names.size()))
        throw std::invalid_argument("feature map set: channel count does not match manifest");
    for (double v : maps.data)
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("feature map set: values must be finite and >= 0");
}

PrimitiveRepresentation fov_counter(const GaussianScene& scene,
                                    const std::vector<Camera>& cameras, double margin,
                                    double near_plane) {
    if (margin < 0) throw std::invalid_argument("fov_counter: margin must be >= 0");
    PrimitiveRepresentation rep;
    rep.kind = RepKind::FovCounter;
    rep.values.assign(scene.size(), 0.0);
    parallel_for(scene.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            int count = 0;
            for (const auto& cam : cameras) {
                Eigen::Vector3d t = cam.world_to_camera(scene.gaussians[k].mean);
                if (t.z() <= near_plane) continue;
                double px = cam.fx * t.x() / t.z() + cam.cx;
                double py = cam.fy * t.y() / t.z() + cam.cy;
                if (px >= -margin * cam.width && px <= (1.0 + margin) * cam.width &&
                    py >= -margin * cam.height && py <= (1.0 + margin) * cam.height)
                    ++count;
            }
            rep.values[k] = count;
        }
    });
    return rep;
}

namespace {

// agg over a per-pixel weight stream; empty stream yields 0.
struct Aggregator {
    Agg agg;
    double acc = 0.0;
    std::size_t n = 0;
    void add(double w) {
        if (agg == Agg::Max)
            acc = std::max(acc, w);
        else
            acc += w;
        ++n;
    }
    double result() const {
        if (n == 0) return 0.0;
        return agg == Agg::Mean ? acc / static_cast<double>(n) : acc;
    }
};

void check_logs(const std::vector<const ContributionLog*>& logs) {
    if (logs.empty()) throw std::invalid_argument("representation: empty view set");
    for (const auto* log : logs)
        if (log == nullptr) throw std::invalid_argument("representation: null log");
    const std::size_t n = logs[0]->per_gaussian.size();
    for (const auto* log : logs)
        if (log->per_gaussian.size() != n)
            throw std::invalid_argument("representation: logs disagree on primitive count");
}

} // namespace

std::vector<std::vector<double>> per_view_visibility_aggregates(
    const std::vector<const ContributionLog*>& logs, Agg agg, bool include_alpha) {
    check_logs(logs);
    const std::size_t n = logs[0]->per_gaussian.size();
    std::vector<std::vector<double>> table(logs.size(), std::vector<double>(n, 0.0));
    for (std::size_t v = 0; v < logs.size(); ++v) {
        auto& row = table[v];
        const auto& log = *logs[v];
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t k = begin; k < end; ++k) {
                Aggregator a{agg};
                for (const auto& e : log.per_gaussian[k])
                    a.add(include_alpha ? e.alpha * e.transmittance : e.transmittance);
                row[k] = a.result();
            }
        });
    }
    return table;
}

std::vector<std::vector<double>> per_view_error_aggregates(
    const std::vector<const ContributionLog*>& logs,
    const std::vector<const ImageBuffer*>& error_maps, Agg agg, bool include_alpha) {
    check_logs(logs);
    if (error_maps.size() != logs.size())
        throw std::invalid_argument("representation: one error map per view required");
    const std::size_t n = logs[0]->per_gaussian.size();
    std::vector<std::vector<double>> table(logs.size(), std::vector<double>(n, 0.0));
    for (std::size_t v = 0; v < logs.size(); ++v) {
        const auto& log = *logs[v];
        const auto& err = *error_maps[v];
        if (err.width != log.width || err.height != log.height || err.channels != 1)
            throw std::invalid_argument("representation: error map does not match log dimensions");
        auto& row = table[v];
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t k = begin; k < end; ++k) {
                Aggregator a{agg};
                for (const auto& e : log.per_gaussian[k]) {
                    double w = include_alpha ? e.alpha * e.transmittance : e.transmittance;
                    a.add(err.data[e.pixel] * w);
                }
                row[k] = a.result();
            }
        });
    }
    return table;
}

PrimitiveRepresentation visibility_representation(
    const std::vector<const ContributionLog*>& logs, Agg agg, bool include_alpha) {
    auto table = per_view_visibility_aggregates(logs, agg, include_alpha);
    const std::size_t n = table[0].size();
    PrimitiveRepresentation rep;
    rep.kind = RepKind::Visibility;
    rep.agg = agg;
    rep.include_alpha = include_alpha;
    rep.values.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double best = 0.0;
        for (const auto& row : table) best = std::max(best, row[k]);
        rep.values[k] = best;
    }
    return rep;
}

PrimitiveRepresentation error_representation(const std::vector<const ContributionLog*>& logs,
                                             const std::vector<const ImageBuffer*>& error_maps,
                                             Agg agg, bool include_alpha,
                                             bool mean_over_visible_only) {
    auto table = per_view_error_aggregates(logs, error_maps, agg, include_alpha);
    const std::size_t n = table[0].size();
    PrimitiveRepresentation rep;
    rep.kind = RepKind::Error;
    rep.agg = agg;
    rep.include_alpha = include_alpha;
    rep.values.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double sum = 0.0;
        std::size_t visible = 0;
        for (std::size_t v = 0; v < table.size(); ++v) {
            sum += table[v][k];
            if (!logs[v]->per_gaussian[k].empty()) ++visible;
        }
        std::size_t denom = mean_over_visible_only ? std::max<std::size_t>(visible, 1)
                                                   : table.size();
        rep.values[k] = sum / static_cast<double>(denom);
    }
    return rep;
}

double vmf_weight(const Eigen::Vector3d& nu, const Eigen::Vector3d& d, double kappa) {
    return std::exp(kappa * nu.dot(d) - kappa);
}

SampledSphereFunction directional_representation(
    const std::vector<const ContributionLog*>& logs,
    const std::vector<const ImageBuffer*>& error_maps,
    const std::vector<Eigen::Vector3d>& view_dirs, Agg agg, bool include_alpha, double kappa,
    const std::vector<Eigen::Vector3d>& sample_dirs, bool mean_over_visible_only) {
    check_logs(logs);
    if (view_dirs.size() != logs.size())
        throw std::invalid_argument("directional representation: one view direction per log");
    if (kappa <= 0) throw std::invalid_argument("directional representation: kappa must be > 0");
    const bool is_error = !error_maps.empty();
    auto table = is_error ? per_view_error_aggregates(logs, error_maps, agg, include_alpha)
                          : per_view_visibility_aggregates(logs, agg, include_alpha);
    const std::size_t n = table[0].size();
    const std::size_t n_views = logs.size();

    // The vMF factor is constant over a view's pixels, so each sample
    // direction only reweights the per-view aggregates.
    std::vector<std::vector<double>> vmf(n_views, std::vector<double>(sample_dirs.size()));
    for (std::size_t v = 0; v < n_views; ++v)
        for (std::size_t i = 0; i < sample_dirs.size(); ++i)
            vmf[v][i] = vmf_weight(view_dirs[v], sample_dirs[i], kappa);

    SampledSphereFunction out;
    out.directions = sample_dirs;
    out.values.assign(n, std::vector<double>(sample_dirs.size(), 0.0));
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            std::size_t visible = 0;
            if (is_error && mean_over_visible_only)
                for (std::size_t v = 0; v < n_views; ++v)
                    if (!logs[v]->per_gaussian[k].empty()) ++visible;
            double denom = is_error ? static_cast<double>(mean_over_visible_only
                                                              ? std::max<std::size_t>(visible, 1)
                                                              : n_views)
                                    : 1.0;
            for (std::size_t i = 0; i < sample_dirs.size(); ++i) {
                double acc = 0.0;
                for (std::size_t v = 0; v < n_views; ++v) {
                    double term = table[v][k] * vmf[v][i];
                    if (is_error)
                        acc += term;
                    else
                        acc = std::max(acc, term);
                }
                out.values[k][i] = is_error ? acc / denom : acc;
            }
        }
    });
    return out;
}

PrimitiveRepresentation encode_directional(const SampledSphereFunction& sampled, RepKind kind,
                                           Agg agg, bool include_alpha, double kappa,
                                           int degree) {
    PrimitiveRepresentation rep;
    rep.kind = kind;
    rep.agg = agg;
    rep.include_alpha = include_alpha;
    rep.directional = true;
    rep.kappa = kappa;
    rep.sh_degree = degree;
    rep.sh.resize(sampled.values.size());
    parallel_for(sampled.values.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k)
            rep.sh[k] = sh_fit(sampled.values[k], sampled.directions, degree);
    });
    return rep;
}

std::vector<PrimitiveRepresentation> build_feature_representations(
    const GaussianScene& scene, const std::vector<Camera>& cameras,
    const std::vector<const ContributionLog*>& logs,
    const std::vector<const ImageBuffer*>& error_maps, const RepresentationConfig& cfg) {
    if (cameras.size() != logs.size())
        throw std::invalid_argument("representations: cameras and logs must be index-aligned");
    std::vector<PrimitiveRepresentation> reps;
    reps.reserve(13);
    reps.push_back(fov_counter(scene, cameras, cfg.frustum_margin, cfg.near_plane));

    std::vector<Eigen::Vector3d> view_dirs;
    std::vector<Eigen::Vector3d> sample_dirs;
    if (cfg.directional) {
        for (const auto& cam : cameras) view_dirs.push_back(cam.view_direction());
        sample_dirs = fibonacci_sphere(cfg.sphere_samples);
    }

    for (RepKind kind : {RepKind::Visibility, RepKind::Error}) {
        const bool is_error = kind == RepKind::Error;
        for (bool alpha : {true, false}) {
            for (Agg agg : {Agg::Max, Agg::Sum, Agg::Mean}) {
                if (cfg.directional) {
                    auto sampled = directional_representation(
                        logs, is_error ? error_maps : std::vector<const ImageBuffer*>{},
                        view_dirs, agg, alpha, cfg.kappa, sample_dirs,
                        cfg.mean_over_visible_only);
                    reps.push_back(encode_directional(sampled, kind, agg, alpha, cfg.kappa,
                                                      cfg.sh_degree));
                } else if (is_error) {
                    reps.push_back(error_representation(logs, error_maps, agg, alpha,
                                                        cfg.mean_over_visible_only));
                } else {
                    reps.push_back(visibility_representation(logs, agg, alpha));
                }
            }
        }
    }
    return reps;
}

FeatureMapSet render_feature_maps(const GaussianScene& scene,
                                  const std::vector<PrimitiveRepresentation>& representations,
                                  const Camera& camera, const RenderParams& params) {
    if (representations.empty())
        throw std::invalid_argument("render_feature_maps: no representations given");
    const std::size_t n = scene.size();
    std::vector<std::vector<double>> values;
    values.reserve(representations.size());
    std::vector<Eigen::Vector3d> dirs;

    FeatureMapSet out;
    for (const auto& rep : representations) {
        if (rep.primitive_count() != n)
            throw std::invalid_argument("render_feature_maps: representation size mismatch");
        out.channel_names.push_back(rep.channel_name());
        if (!rep.directional) {
            values.push_back(rep.values);
        } else {
            if (dirs.empty()) dirs = per_gaussian_view_directions(scene, camera);
            std::vector<double> ch(n);
            for (std::size_t k = 0; k < n; ++k)
                ch[k] = std::max(0.0, sh_eval(rep.sh[k], dirs[k], rep.sh_degree));
            values.push_back(std::move(ch));
        }
    }

    ValueSource source{&values};
    out.maps = render_view(scene, camera, source, false, params).image;
    return out;
}

ErrorMap pixel_error_map(const ImageBuffer& gt, const ImageBuffer& rendered) {
    if (gt.width != rendered.width || gt.height != rendered.height ||
        gt.channels != rendered.channels)
        throw std::invalid_argument("pixel_error_map: dimension mismatch");
    if (gt.channels != 1 && gt.channels != 3)
        throw std::invalid_argument("pixel_error_map: expected 1 (depth) or 3 (color) channels");

    ErrorMap out;
    out.map = ImageBuffer(gt.width, gt.height, 1);
    out.valid = ImageBuffer(gt.width, gt.height, 1, 1.0);
    const bool depth = gt.channels == 1;
    for (std::size_t p = 0; p < gt.pixel_count(); ++p) {
        if (depth) {
            double g = gt.data[p];
            if (!(std::isfinite(g) && g > 0.0)) {
                out.valid.data[p] = 0.0;
                out.map.data[p] = 0.0;
                continue;
            }
            out.map.data[p] = std::abs(g - rendered.data[p]);
        } else {
            double acc = 0.0;
            for (int c = 0; c < 3; ++c)
                acc += std::abs(gt.data[p * 3 + c] - rendered.data[p * 3 + c]);
            out.map.data[p] = acc / 3.0;
        }
    }
    return out;
}

} // namespace uegs
