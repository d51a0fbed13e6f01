#include "uegs/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uegs/parallel.hpp"
#include "uegs/sh.hpp"

namespace uegs {

namespace {

// Largest eigenvalue of a symmetric 2x2 matrix.
double max_eigenvalue(const Eigen::Matrix2d& m) {
    double mid = 0.5 * (m(0, 0) + m(1, 1));
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    return mid + std::sqrt(std::max(0.0, mid * mid - det));
}

struct LogEntry {
    std::uint32_t gaussian;
    std::uint32_t pixel;
    double alpha;
    double transmittance;
};

// Per-Gaussian channel values for the requested source, channel-major.
std::vector<std::vector<double>> prepare_values(const GaussianScene& scene, const Camera& cam,
                                                const ChannelSource& source) {
    const std::size_t n = scene.size();
    if (std::holds_alternative<ColorSource>(source)) {
        std::vector<std::vector<double>> values(3, std::vector<double>(n, 0.0));
        auto dirs = per_gaussian_view_directions(scene, cam);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& g = scene.gaussians[k];
            if (g.sh_color.size() != 3)
                throw std::invalid_argument("render: color source requires SH color on every primitive");
            int deg = g.sh_degree();
            for (int c = 0; c < 3; ++c) values[c][k] = sh_eval(g.sh_color[c], dirs[k], deg);
        }
        return values;
    }
    if (std::holds_alternative<DepthSource>(source)) {
        std::vector<std::vector<double>> values(1, std::vector<double>(n, 0.0));
        for (std::size_t k = 0; k < n; ++k)
            values[0][k] = cam.world_to_camera(scene.gaussians[k].mean).z();
        return values;
    }
    const auto& vs = std::get<ValueSource>(source);
    if (vs.values == nullptr || vs.values->empty())
        throw std::invalid_argument("render: value source has no channels");
    for (const auto& ch : *vs.values)
        if (ch.size() != n)
            throw std::invalid_argument("render: value source channel length != primitive count");
    return *vs.values;
}

bool wants_normalization(const ChannelSource& source) {
    const auto* d = std::get_if<DepthSource>(&source);
    return d != nullptr && d->normalized;
}

} // namespace

std::size_t ContributionLog::entry_count() const {
    std::size_t n = 0;
    for (const auto& v : per_gaussian) n += v.size();
    return n;
}

std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam,
                                        const RenderParams& params) {
    Eigen::Vector3d t = cam.world_to_camera(g.mean);
    if (t.z() <= params.near_plane) return std::nullopt;

    Splat2D s;
    s.depth = t.z();
    s.opacity = g.opacity;
    s.mean2d = {cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy};

    const double inv_z = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z * inv_z,
           0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z * inv_z;

    Eigen::Matrix3d cov_world = covariance_3d(g.scale, g.rotation);
    Eigen::Matrix<double, 2, 3> jw = jac * cam.rotation;
    s.cov2d = jw * cov_world * jw.transpose();
    s.cov2d(0, 0) += params.dilation;
    s.cov2d(1, 1) += params.dilation;

    const double det = s.cov2d(0, 0) * s.cov2d(1, 1) - s.cov2d(0, 1) * s.cov2d(1, 0);
    s.cov2d_inv << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det,
                   -s.cov2d(1, 0) / det, s.cov2d(0, 0) / det;

    const double radius = 3.0 * std::sqrt(max_eigenvalue(s.cov2d));
    s.x0 = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - radius)));
    s.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(s.mean2d.x() + radius)));
    s.y0 = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - radius)));
    s.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(s.mean2d.y() + radius)));
    return s;
}

std::vector<Splat2D> project_sorted(const GaussianScene& scene, const Camera& cam,
                                    const RenderParams& params) {
    std::vector<Splat2D> splats;
    splats.reserve(scene.size());
    for (std::size_t k = 0; k < scene.size(); ++k) {
        auto s = project_gaussian(scene.gaussians[k], cam, params);
        if (!s) continue;
        s->gaussian_index = static_cast<int>(k);
        splats.push_back(*s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_index < b.gaussian_index;
    });
    return splats;
}

std::vector<Eigen::Vector3d> per_gaussian_view_directions(const GaussianScene& scene,
                                                          const Camera& cam) {
    const Eigen::Vector3d center = cam.center();
    std::vector<Eigen::Vector3d> dirs;
    dirs.reserve(scene.size());
    for (const auto& g : scene.gaussians) {
        Eigen::Vector3d d = g.mean - center;
        double norm = d.norm();
        dirs.push_back(norm > 1e-12 ? Eigen::Vector3d(d / norm) : Eigen::Vector3d::UnitZ());
    }
    return dirs;
}

double splat_alpha(const Splat2D& s, const Eigen::Vector2d& pixel, const RenderParams& params) {
    Eigen::Vector2d delta = pixel - s.mean2d;
    double power = -0.5 * delta.dot(s.cov2d_inv * delta);
    if (power > 0.0) power = 0.0;
    return std::min(params.alpha_clamp, s.opacity * std::exp(power));
}

std::pair<double, std::vector<CompositedSplat>> composite_pixel(
    const std::vector<Splat2D>& sorted_splats, const Eigen::Vector2d& pixel,
    const std::vector<double>& channel_values, const RenderParams& params) {
    if (channel_values.size() != sorted_splats.size())
        throw std::invalid_argument("composite_pixel: one value per splat required");

    double value = 0.0;
    double transmittance = 1.0;
    std::vector<CompositedSplat> contributions;
    for (std::size_t i = 0; i < sorted_splats.size(); ++i) {
        double alpha = splat_alpha(sorted_splats[i], pixel, params);
        if (alpha < params.alpha_min) continue;
        value += channel_values[i] * alpha * transmittance;
        contributions.push_back({sorted_splats[i].gaussian_index, alpha, transmittance});
        transmittance *= 1.0 - alpha;
        if (transmittance < params.t_stop) break;
    }
    return {value, std::move(contributions)};
}

RenderResult render_view(const GaussianScene& scene, const Camera& cam,
                         const ChannelSource& source, bool with_log,
                         const RenderParams& params) {
    cam.validate();
    const auto values = prepare_values(scene, cam, source);
    const int n_channels = static_cast<int>(values.size());
    const bool normalize = wants_normalization(source);

    RenderResult result;
    result.image = ImageBuffer(cam.width, cam.height, n_channels);
    if (scene.empty()) {
        if (with_log) result.log = ContributionLog{cam.width, cam.height, {}};
        return result;
    }

    const auto splats = project_sorted(scene, cam, params);

    // One chunk of rows per worker; logs are concatenated in chunk order so
    // the merged stream is in global row-major pixel order.
    const int n_workers = std::max(1, std::min(thread_count(), cam.height));
    const int rows_per_chunk = (cam.height + n_workers - 1) / n_workers;
    const int n_chunks = (cam.height + rows_per_chunk - 1) / rows_per_chunk;

    std::vector<std::vector<LogEntry>> chunk_logs(n_chunks);
    ImageBuffer weights;
    if (normalize) weights = ImageBuffer(cam.width, cam.height, 1);

    parallel_for_each(static_cast<std::size_t>(n_chunks), [&](std::size_t chunk) {
        const int row_begin = static_cast<int>(chunk) * rows_per_chunk;
        const int row_end = std::min(cam.height, row_begin + rows_per_chunk);

        // Per-row candidate lists, preserving the global depth order.
        std::vector<std::vector<const Splat2D*>> rows(row_end - row_begin);
        for (const auto& s : splats) {
            if (s.bbox_empty()) continue;
            int y0 = std::max(s.y0, row_begin), y1 = std::min(s.y1, row_end - 1);
            for (int y = y0; y <= y1; ++y) rows[y - row_begin].push_back(&s);
        }

        auto& log = chunk_logs[chunk];
        std::vector<double> acc(n_channels);
        for (int y = row_begin; y < row_end; ++y) {
            const auto& cands = rows[y - row_begin];
            for (int x = 0; x < cam.width; ++x) {
                Eigen::Vector2d pixel(x + 0.5, y + 0.5);
                std::fill(acc.begin(), acc.end(), 0.0);
                double transmittance = 1.0;
                double weight = 0.0;
                for (const Splat2D* s : cands) {
                    if (x < s->x0 || x > s->x1) continue;
                    double alpha = splat_alpha(*s, pixel, params);
                    if (alpha < params.alpha_min) continue;
                    const double w = alpha * transmittance;
                    for (int c = 0; c < n_channels; ++c)
                        acc[c] += values[c][s->gaussian_index] * w;
                    weight += w;
                    if (with_log)
                        log.push_back({static_cast<std::uint32_t>(s->gaussian_index),
                                       static_cast<std::uint32_t>(y) * cam.width + x, alpha,
                                       transmittance});
                    transmittance *= 1.0 - alpha;
                    if (transmittance < params.t_stop) break;
                }
                if (normalize && weight > 0.0)
                    for (int c = 0; c < n_channels; ++c) acc[c] /= weight;
                for (int c = 0; c < n_channels; ++c) result.image.at(x, y, c) = acc[c];
            }
        }
    });

    if (with_log) {
        ContributionLog log;
        log.width = cam.width;
        log.height = cam.height;
        log.per_gaussian.resize(scene.size());
        std::vector<std::size_t> counts(scene.size(), 0);
        for (const auto& chunk : chunk_logs)
            for (const auto& e : chunk) ++counts[e.gaussian];
        for (std::size_t k = 0; k < scene.size(); ++k) log.per_gaussian[k].reserve(counts[k]);
        for (const auto& chunk : chunk_logs)
            for (const auto& e : chunk)
                log.per_gaussian[e.gaussian].push_back({e.pixel, e.alpha, e.transmittance});
        result.log = std::move(log);
    }
    return result;
}

ImageBuffer reference_render(const GaussianScene& scene, const Camera& cam,
                             const ChannelSource& source, const RenderParams& params) {
    cam.validate();
    const auto values = prepare_values(scene, cam, source);
    const int n_channels = static_cast<int>(values.size());
    const bool normalize = wants_normalization(source);

    ImageBuffer image(cam.width, cam.height, n_channels);
    if (scene.empty()) return image;
    const auto splats = project_sorted(scene, cam, params);

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Eigen::Vector2d pixel(x + 0.5, y + 0.5);
            double transmittance = 1.0;
            double weight = 0.0;
            for (const auto& s : splats) {
                if (!s.covers(x, y)) continue;
                double alpha = splat_alpha(s, pixel, params);
                if (alpha < params.alpha_min) continue;
                const double w = alpha * transmittance;
                for (int c = 0; c < n_channels; ++c)
                    image.at(x, y, c) += values[c][s.gaussian_index] * w;
                weight += w;
                transmittance *= 1.0 - alpha;
                if (transmittance < 1e-12) break;
            }
            if (normalize && weight > 0.0)
                for (int c = 0; c < n_channels; ++c) image.at(x, y, c) /= weight;
        }
    }
    return image;
}

void for_each_pixel_contributions(
    const GaussianScene& scene, const Camera& cam,
    const std::function<void(int x, int y, const std::vector<CompositedSplat>&)>& fn,
    const RenderParams& params) {
    cam.validate();
    if (scene.empty()) return;
    const auto splats = project_sorted(scene, cam, params);

    std::vector<CompositedSplat> contributions;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Eigen::Vector2d pixel(x + 0.5, y + 0.5);
            contributions.clear();
            double transmittance = 1.0;
            for (const auto& s : splats) {
                if (!s.covers(x, y)) continue;
                double alpha = splat_alpha(s, pixel, params);
                if (alpha < params.alpha_min) continue;
                contributions.push_back({s.gaussian_index, alpha, transmittance});
                transmittance *= 1.0 - alpha;
                if (transmittance < params.t_stop) break;
            }
            fn(x, y, contributions);
        }
    }
}

} // namespace uegs
