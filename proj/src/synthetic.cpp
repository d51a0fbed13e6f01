#include "uegs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "uegs/sh.hpp"

namespace uegs {

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1], keeps the log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::index(std::uint64_t n) {
    // Rejection below the largest multiple of n, so the result is unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t draw;
    do {
        draw = engine_();
    } while (draw >= limit);
    return draw % n;
}

void SynthSpec::validate() const {
    if (n_gaussians < 1) throw std::invalid_argument("synth: n_gaussians must be >= 1");
    if (camera_count < 1) throw std::invalid_argument("synth: camera_count must be >= 1");
    if (ring_heights.empty() || ring_heights.size() > 3) {
        throw std::invalid_argument("synth: between one and three camera rings");
    }
    if (!(world_radius > 0) || !(ring_radius > 0) || !(focal > 0)) {
        throw std::invalid_argument("synth: radii and focal length must be > 0");
    }
    if (image_width < 1 || image_height < 1) {
        throw std::invalid_argument("synth: image size must be >= 1");
    }
    if (degradation.mode == SynthDegradation::Mode::DropFraction &&
        !(degradation.amount >= 0.0 && degradation.amount < 1.0)) {
        throw std::invalid_argument("synth: drop fraction must be in [0, 1)");
    }
    if (degradation.mode != SynthDegradation::Mode::DropFraction && degradation.amount < 0.0) {
        throw std::invalid_argument("synth: noise sigma must be >= 0");
    }
}

namespace {

Eigen::Vector3d random_unit_vector(Rng& rng) {
    Eigen::Vector3d v;
    do {
        v = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    } while (v.norm() < 1e-12);
    return v.normalized();
}

GaussianScene sample_truth_scene(const SynthSpec& spec, Rng& rng) {
    GaussianScene scene;
    scene.gaussians.reserve(static_cast<std::size_t>(spec.n_gaussians));
    for (int i = 0; i < spec.n_gaussians; ++i) {
        GaussianPrimitive g;
        const Eigen::Vector3d dir = random_unit_vector(rng);
        const double radius = spec.world_radius * std::cbrt(rng.uniform());
        g.mean = radius * dir;
        for (int a = 0; a < 3; ++a) {
            g.scale[a] = spec.world_radius * rng.uniform(0.03, 0.09);
        }
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (q.norm() < 1e-12) q = Eigen::Vector4d(1, 0, 0, 0);
        q.normalize();
        g.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
        g.opacity = rng.uniform(0.2, 0.7);
        g.sh_color.assign(3, Eigen::VectorXd::Zero(4)); // degree 1
        for (int c = 0; c < 3; ++c) {
            g.sh_color[c][0] = rng.uniform(0.15, 0.85) / kSh0;
            for (int j = 1; j < 4; ++j) g.sh_color[c][j] = rng.uniform(-0.1, 0.1);
        }
        scene.gaussians.push_back(std::move(g));
    }
    return scene;
}

GaussianScene degrade(const GaussianScene& truth, const SynthDegradation& degradation,
                      Rng& rng) {
    GaussianScene out = truth;
    switch (degradation.mode) {
    case SynthDegradation::Mode::None:
        break;
    case SynthDegradation::Mode::DropFraction: {
        const std::size_t n = truth.size();
        const std::size_t keep = static_cast<std::size_t>(
            std::ceil((1.0 - degradation.amount) * static_cast<double>(n)));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0u);
        for (std::size_t i = n; i > 1; --i) { // Fisher-Yates with the seeded stream
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        std::vector<std::size_t> kept(order.begin(),
                                      order.begin() + static_cast<std::ptrdiff_t>(keep));
        std::sort(kept.begin(), kept.end()); // keep the original primitive order
        out.gaussians.clear();
        out.gaussians.reserve(keep);
        for (std::size_t idx : kept) out.gaussians.push_back(truth.gaussians[idx]);
        break;
    }
    case SynthDegradation::Mode::JitterMeans:
        for (auto& g : out.gaussians) {
            g.mean += degradation.amount *
                      Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        }
        break;
    case SynthDegradation::Mode::OpacityNoise:
        for (auto& g : out.gaussians) {
            g.opacity = std::clamp(g.opacity + degradation.amount * rng.normal(), 0.01, 1.0);
        }
        break;
    }
    return out;
}

Camera ring_camera(const SynthSpec& spec, int index) {
    const double angle =
        2.0 * std::numbers::pi * static_cast<double>(index) / static_cast<double>(spec.camera_count);
    const double height = spec.ring_heights[static_cast<std::size_t>(index) %
                                            spec.ring_heights.size()];
    const Eigen::Vector3d position(spec.ring_radius * std::cos(angle),
                                   spec.ring_radius * std::sin(angle), height);

    const Eigen::Vector3d forward = (-position).normalized(); // look at the origin
    Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
    if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);

    Camera cam;
    cam.width = spec.image_width;
    cam.height = spec.image_height;
    cam.fx = cam.fy = spec.focal;
    cam.cx = 0.5 * spec.image_width;
    cam.cy = 0.5 * spec.image_height;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * position;
    return cam;
}

} // namespace

SynthResult generate(const SynthSpec& spec, const RenderParams& params) {
    spec.validate();
    Rng rng(spec.seed);

    SynthResult result;
    result.truth = sample_truth_scene(spec, rng);
    result.degraded = degrade(result.truth, spec.degradation, rng);

    bool train_reg_assigned = false;
    for (int i = 0; i < spec.camera_count; ++i) {
        View view;
        char id[16];
        std::snprintf(id, sizeof(id), "cam-%02d", i);
        view.id = id;
        view.camera = ring_camera(spec, i);
        if (i % 4 == 3) {
            view.role = train_reg_assigned ? ViewRole::HoldoutEval : ViewRole::HoldoutTrainReg;
            train_reg_assigned = true;
        } else {
            view.role = ViewRole::Train;
        }
        view.gt_color = render_view(result.truth, view.camera, ColorSource{}, false, params).image;
        view.gt_depth =
            render_view(result.truth, view.camera, DepthSource{false}, false, params).image;
        result.views.views.push_back(std::move(view));
    }
    return result;
}

GroundTruthErrors error_ground_truth(const ViewSet& views, const GaussianScene& degraded,
                                     const RenderParams& params) {
    GroundTruthErrors out;
    out.color.reserve(views.size());
    out.depth.reserve(views.size());
    for (const View& view : views.views) {
        ImageBuffer color =
            render_view(degraded, view.camera, ColorSource{}, false, params).image;
        out.color.push_back(pixel_error_map(view.gt_color, color));
        if (view.gt_depth.has_value()) {
            ImageBuffer depth =
                render_view(degraded, view.camera, DepthSource{false}, false, params).image;
            out.depth.push_back(pixel_error_map(*view.gt_depth, depth));
        } else {
            out.depth.push_back(ErrorMap{});
        }
    }
    return out;
}

} // namespace uegs
