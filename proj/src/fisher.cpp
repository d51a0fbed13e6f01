#include "uegs/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uegs/parallel.hpp"
#include "uegs/sh.hpp"

namespace uegs {

void FisherDiagonal::validate() const {
    const std::size_t n = opacity.size();
    if (mean.size() != n || scale.size() != n || rotation.size() != n || sh_dc.size() != n ||
        sh_rest.size() != n) {
        throw std::invalid_argument("fisher diagonal: group sizes disagree");
    }
    auto check = [](double v) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("fisher diagonal: entries must be finite and >= 0");
    };
    for (std::size_t g = 0; g < n; ++g) {
        for (double v : mean[g]) check(v);
        for (double v : scale[g]) check(v);
        for (double v : rotation[g]) check(v);
        check(opacity[g]);
        for (double v : sh_dc[g]) check(v);
        for (double v : sh_rest[g]) check(v);
    }
}

std::vector<double> color_param_gradient(double alpha, double transmittance,
                                         const std::vector<double>& sh_basis) {
    std::vector<double> grad(sh_basis.size());
    const double w = alpha * transmittance;
    for (std::size_t j = 0; j < sh_basis.size(); ++j) grad[j] = w * sh_basis[j];
    return grad;
}

double opacity_gradient(const std::vector<CompositedSplat>& contributions,
                        const std::vector<double>& values, std::size_t k, double phi_k,
                        bool clamped) {
    if (k >= contributions.size() || values.size() != contributions.size()) {
        throw std::invalid_argument("opacity_gradient: bad index or value count");
    }
    if (clamped) return 0.0;
    const double alpha_k = contributions[k].alpha;
    double rear = 0.0;
    for (std::size_t j = k + 1; j < contributions.size(); ++j) {
        rear += values[j] * contributions[j].alpha * contributions[j].transmittance;
    }
    return phi_k * (contributions[k].transmittance * values[k] - rear / (1.0 - alpha_k));
}

ImageBuffer geometric_gradient_fd(const GaussianScene& scene, const Camera& cam,
                                  std::size_t gaussian_index, const GeomParam& param,
                                  double step_rel, const RenderParams& params) {
    if (gaussian_index >= scene.size()) {
        throw std::invalid_argument("geometric_gradient_fd: gaussian index out of range");
    }
    auto parameter_of = [&](GaussianPrimitive& g) -> double& {
        switch (param.kind) {
        case GeomParamKind::Mean:
            return g.mean[param.index];
        case GeomParamKind::Scale:
            return g.scale[param.index];
        case GeomParamKind::Rotation:
        default:
            switch (param.index) {
            case 0: return g.rotation.w();
            case 1: return g.rotation.x();
            case 2: return g.rotation.y();
            default: return g.rotation.z();
            }
        }
    };
    if ((param.kind == GeomParamKind::Rotation && (param.index < 0 || param.index > 3)) ||
        (param.kind != GeomParamKind::Rotation && (param.index < 0 || param.index > 2))) {
        throw std::invalid_argument("geometric_gradient_fd: parameter index out of range");
    }

    GaussianScene perturbed = scene;
    double& theta = parameter_of(perturbed.gaussians[gaussian_index]);
    const double base = theta;
    const double h = std::max(step_rel * std::abs(base), 1e-6);

    auto render_at = [&](double value) {
        theta = value;
        if (param.kind == GeomParamKind::Rotation) {
            perturbed.gaussians[gaussian_index].rotation.normalize();
        }
        ImageBuffer img = render_view(perturbed, cam, ColorSource{}, false, params).image;
        // Restore the unnormalized state for the next evaluation.
        perturbed.gaussians[gaussian_index] = scene.gaussians[gaussian_index];
        return img;
    };

    ImageBuffer plus = render_at(base + h);
    ImageBuffer minus = render_at(base - h);
    ImageBuffer grad(plus.width, plus.height, plus.channels);
    const double inv = 1.0 / (2.0 * h);
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        grad.data[i] = (plus.data[i] - minus.data[i]) * inv;
    }
    return grad;
}

FisherDiagonal fisher_diagonal(const GaussianScene& scene, const std::vector<Camera>& cameras,
                               bool include_geometric, const RenderParams& params) {
    const std::size_t n = scene.size();
    FisherDiagonal fisher;
    fisher.mean.assign(n, {0.0, 0.0, 0.0});
    fisher.scale.assign(n, {0.0, 0.0, 0.0});
    fisher.rotation.assign(n, {0.0, 0.0, 0.0, 0.0});
    fisher.opacity.assign(n, 0.0);
    fisher.sh_dc.assign(n, {0.0, 0.0, 0.0});
    fisher.sh_rest.resize(n);
    for (std::size_t g = 0; g < n; ++g) {
        const int coeffs = static_cast<int>(scene.gaussians[g].sh_color.empty()
                                                ? 1
                                                : scene.gaussians[g].sh_color[0].size());
        fisher.sh_rest[g].assign(3 * static_cast<std::size_t>(std::max(0, coeffs - 1)), 0.0);
        fisher.sh_degree = std::max(fisher.sh_degree, scene.gaussians[g].sh_degree());
    }

    for (const Camera& cam : cameras) {
        const auto dirs = per_gaussian_view_directions(scene, cam);
        std::vector<std::vector<double>> basis(n);
        std::vector<std::array<double, 3>> color(n);
        for (std::size_t g = 0; g < n; ++g) {
            const auto& prim = scene.gaussians[g];
            const int degree = prim.sh_degree();
            basis[g].resize(static_cast<std::size_t>(sh_coeff_count(degree)));
            sh_basis(dirs[g], degree, basis[g].data());
            for (int c = 0; c < 3; ++c) color[g][c] = sh_eval(prim.sh_color[c], dirs[g], degree);
        }

        for_each_pixel_contributions(
            scene, cam,
            [&](int, int, const std::vector<CompositedSplat>& contribs) {
                double rear[3] = {0.0, 0.0, 0.0};
                for (std::size_t ri = contribs.size(); ri-- > 0;) {
                    const auto& c = contribs[ri];
                    const std::size_t g = static_cast<std::size_t>(c.gaussian_index);
                    const double at = c.alpha * c.transmittance;

                    const auto& b = basis[g];
                    const std::size_t rest = b.size() - 1;
                    const double dc_sq = at * b[0] * at * b[0];
                    for (int ch = 0; ch < 3; ++ch) fisher.sh_dc[g][ch] += dc_sq;
                    for (std::size_t j = 1; j < b.size(); ++j) {
                        const double sq = at * b[j] * at * b[j];
                        for (std::size_t ch = 0; ch < 3; ++ch) {
                            fisher.sh_rest[g][ch * rest + (j - 1)] += sq;
                        }
                    }

                    // Same chain rule as opacity_gradient, with the rear sums
                    // maintained incrementally across the backward sweep.
                    const bool clamped = c.alpha >= params.alpha_clamp;
                    if (!clamped) {
                        const double phi = c.alpha / scene.gaussians[g].opacity;
                        const double scale_rear = 1.0 / (1.0 - c.alpha);
                        for (int ch = 0; ch < 3; ++ch) {
                            const double grad =
                                phi * (c.transmittance * color[g][ch] - rear[ch] * scale_rear);
                            fisher.opacity[g] += grad * grad;
                        }
                    }
                    for (int ch = 0; ch < 3; ++ch) rear[ch] += color[g][ch] * at;
                }
            },
            params);

        if (include_geometric) {
            parallel_for(n, [&](std::size_t begin, std::size_t end) {
                for (std::size_t g = begin; g < end; ++g) {
                    static constexpr GeomParamKind kKinds[3] = {
                        GeomParamKind::Mean, GeomParamKind::Scale, GeomParamKind::Rotation};
                    for (int kind = 0; kind < 3; ++kind) {
                        const int count = kKinds[kind] == GeomParamKind::Rotation ? 4 : 3;
                        for (int index = 0; index < count; ++index) {
                            ImageBuffer grad = geometric_gradient_fd(
                                scene, cam, g, GeomParam{kKinds[kind], index}, 1e-4, params);
                            double sum_sq = 0.0;
                            for (double v : grad.data) sum_sq += v * v;
                            switch (kKinds[kind]) {
                            case GeomParamKind::Mean:
                                fisher.mean[g][static_cast<std::size_t>(index)] += sum_sq;
                                break;
                            case GeomParamKind::Scale:
                                fisher.scale[g][static_cast<std::size_t>(index)] += sum_sq;
                                break;
                            case GeomParamKind::Rotation:
                                fisher.rotation[g][static_cast<std::size_t>(index)] += sum_sq;
                                break;
                            }
                        }
                    }
                }
            });
        }
    }
    return fisher;
}

namespace {

double reciprocal_sum(const double* begin, std::size_t count, double eps) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += 1.0 / (begin[i] + eps);
    return acc;
}

PrimitiveRepresentation named_values(std::string name, std::vector<double> values) {
    PrimitiveRepresentation rep;
    rep.name_override = std::move(name);
    rep.values = std::move(values);
    return rep;
}

} // namespace

std::vector<std::string> fisher_channel_names() {
    return {"fisher-mean",    "fisher-scale", "fisher-rotation",
            "fisher-opacity", "fisher-sh-dc", "fisher-sh-rest"};
}

FisherUncertainty grouped_uncertainty(const FisherDiagonal& fisher, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("grouped_uncertainty: eps must be > 0");
    fisher.validate();
    const std::size_t n = fisher.size();
    std::vector<std::vector<double>> groups(6, std::vector<double>(n, 0.0));
    std::vector<double> plain(n, 0.0);
    for (std::size_t g = 0; g < n; ++g) {
        groups[0][g] = reciprocal_sum(fisher.mean[g].data(), 3, eps);
        groups[1][g] = reciprocal_sum(fisher.scale[g].data(), 3, eps);
        groups[2][g] = reciprocal_sum(fisher.rotation[g].data(), 4, eps);
        groups[3][g] = 1.0 / (fisher.opacity[g] + eps);
        groups[4][g] = reciprocal_sum(fisher.sh_dc[g].data(), 3, eps);
        groups[5][g] =
            reciprocal_sum(fisher.sh_rest[g].data(), fisher.sh_rest[g].size(), eps);
        plain[g] = groups[4][g] + groups[5][g];
    }

    FisherUncertainty out;
    const auto names = fisher_channel_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        out.groups.push_back(named_values(names[i], std::move(groups[i])));
    }
    out.plain = named_values("fisherrf", std::move(plain));
    return out;
}

} // namespace uegs
