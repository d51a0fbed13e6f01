#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "helpers.hpp"
#include "uegs/representations.hpp"
#include "uegs/sh.hpp"

using namespace uegs;
using testutil::axis_camera;
using testutil::ball_scene;
using testutil::centered_splat;

namespace {

// Two Gaussians over a 2x1 view: g0 touches both pixels, g1 only pixel 0.
ContributionLog hand_log() {
    ContributionLog log;
    log.width = 2;
    log.height = 1;
    log.per_gaussian.resize(2);
    log.per_gaussian[0] = {{0, 0.5, 1.0}, {1, 0.2, 0.8}};
    log.per_gaussian[1] = {{0, 0.25, 0.5}};
    return log;
}

ContributionLog empty_log() {
    ContributionLog log;
    log.width = 2;
    log.height = 1;
    log.per_gaussian.resize(2);
    return log;
}

ImageBuffer hand_error() {
    ImageBuffer err(2, 1, 1);
    err.at(0, 0, 0) = 2.0;
    err.at(1, 0, 0) = 0.5;
    return err;
}

} // namespace

TEST_CASE("per-view visibility aggregates, hand-checked") {
    const ContributionLog log = hand_log();
    const std::vector<const ContributionLog*> logs{&log};

    // alpha*T weights for g0: {0.5, 0.16}; T-only: {1.0, 0.8}.
    auto t = per_view_visibility_aggregates(logs, Agg::Max, true);
    CHECK(t[0][0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t[0][1] == doctest::Approx(0.125).epsilon(1e-15));
    t = per_view_visibility_aggregates(logs, Agg::Sum, true);
    CHECK(t[0][0] == doctest::Approx(0.66).epsilon(1e-15));
    t = per_view_visibility_aggregates(logs, Agg::Mean, true);
    CHECK(t[0][0] == doctest::Approx(0.33).epsilon(1e-15));
    t = per_view_visibility_aggregates(logs, Agg::Max, false);
    CHECK(t[0][0] == doctest::Approx(1.0).epsilon(1e-15));
    t = per_view_visibility_aggregates(logs, Agg::Sum, false);
    CHECK(t[0][0] == doctest::Approx(1.8).epsilon(1e-15));
    t = per_view_visibility_aggregates(logs, Agg::Mean, false);
    CHECK(t[0][0] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("per-view error aggregates weight the pixel error") {
    const ContributionLog log = hand_log();
    const ImageBuffer err = hand_error();
    const std::vector<const ContributionLog*> logs{&log};
    const std::vector<const ImageBuffer*> errs{&err};

    // g0 terms: {2.0*0.5, 0.5*0.16} = {1.0, 0.08}.
    auto t = per_view_error_aggregates(logs, errs, Agg::Max, true);
    CHECK(t[0][0] == doctest::Approx(1.0).epsilon(1e-15));
    t = per_view_error_aggregates(logs, errs, Agg::Sum, true);
    CHECK(t[0][0] == doctest::Approx(1.08).epsilon(1e-15));
    t = per_view_error_aggregates(logs, errs, Agg::Mean, true);
    CHECK(t[0][0] == doctest::Approx(0.54).epsilon(1e-15));
    CHECK(t[0][1] == doctest::Approx(0.25).epsilon(1e-15)); // g1: 2.0*0.125

    SUBCASE("dimension mismatch throws") {
        ImageBuffer bad(3, 1, 1);
        const std::vector<const ImageBuffer*> wrong{&bad};
        CHECK_THROWS_AS(per_view_error_aggregates(logs, wrong, Agg::Max, true),
                        std::invalid_argument);
    }
}

TEST_CASE("visibility representation is the max over views") {
    const ContributionLog strong = hand_log();
    ContributionLog weak = hand_log();
    weak.per_gaussian[0] = {{0, 0.1, 1.0}};
    weak.per_gaussian[1] = {{1, 0.9, 1.0}};
    const std::vector<const ContributionLog*> logs{&strong, &weak};
    const auto rep = visibility_representation(logs, Agg::Max, true);
    CHECK(rep.values[0] == doctest::Approx(0.5).epsilon(1e-15));  // view 0 wins
    CHECK(rep.values[1] == doctest::Approx(0.9).epsilon(1e-15));  // view 1 wins
    CHECK(rep.channel_name() == "vis-max-alpha");
}

TEST_CASE("error representation mean denominators") {
    const ContributionLog seen = hand_log();
    const ContributionLog unseen = empty_log();
    const ImageBuffer err = hand_error();
    ImageBuffer zero(2, 1, 1);
    const std::vector<const ContributionLog*> logs{&seen, &unseen};
    const std::vector<const ImageBuffer*> errs{&err, &zero};

    // g0 sum-aggregate is 1.08 in the only view that sees it.
    auto rep = error_representation(logs, errs, Agg::Sum, true, false);
    CHECK(rep.values[0] == doctest::Approx(0.54).epsilon(1e-15)); // / all views
    rep = error_representation(logs, errs, Agg::Sum, true, true);
    CHECK(rep.values[0] == doctest::Approx(1.08).epsilon(1e-15)); // / visible views
    CHECK(rep.channel_name() == "err-sum-alpha");
}

TEST_CASE("error representations scale linearly with the error maps") {
    Rng rng(71);
    const auto scene = ball_scene(rng, 10);
    const Camera cam = axis_camera();
    const auto rr = render_view(scene, cam, ColorSource{}, true);
    ImageBuffer err(cam.width, cam.height, 1);
    for (auto& v : err.data) v = rng.uniform(0.0, 1.0);
    ImageBuffer scaled = err;
    for (auto& v : scaled.data) v *= 3.0;

    const std::vector<const ContributionLog*> logs{&*rr.log};
    for (Agg agg : {Agg::Max, Agg::Sum, Agg::Mean}) {
        const auto base = error_representation(logs, {&err}, agg, true);
        const auto big = error_representation(logs, {&scaled}, agg, true);
        for (std::size_t k = 0; k < scene.size(); ++k) {
            CHECK(big.values[k] == doctest::Approx(3.0 * base.values[k]).epsilon(1e-14));
        }
    }
}

TEST_CASE("aggregate ordering: mean <= max <= sum on nonnegative weights") {
    Rng rng(81);
    const auto scene = ball_scene(rng, 15);
    const auto rr = render_view(scene, axis_camera(), ColorSource{}, true);
    const std::vector<const ContributionLog*> logs{&*rr.log};
    const auto mx = per_view_visibility_aggregates(logs, Agg::Max, true);
    const auto sm = per_view_visibility_aggregates(logs, Agg::Sum, true);
    const auto mn = per_view_visibility_aggregates(logs, Agg::Mean, true);
    for (std::size_t k = 0; k < scene.size(); ++k) {
        CHECK(mn[0][k] <= mx[0][k] + 1e-15);
        CHECK(mx[0][k] <= sm[0][k] + 1e-15);
    }
}

TEST_CASE("vMF kernel closed forms") {
    const Eigen::Vector3d nu = Eigen::Vector3d(1, 2, 2).normalized();
    CHECK(vmf_weight(nu, nu, 8.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(vmf_weight(nu, -nu, 8.0) == doctest::Approx(std::exp(-16.0)).epsilon(1e-13));
    // Monotone in the angle.
    const Eigen::Vector3d side = nu.unitOrthogonal();
    double prev = 1.0;
    for (double t : {0.2, 0.6, 1.1, 2.0}) {
        const Eigen::Vector3d d = (std::cos(t) * nu + std::sin(t) * side).normalized();
        const double w = vmf_weight(nu, d, 8.0);
        CHECK(w < prev);
        prev = w;
    }
}

TEST_CASE("single-view directional representation is aggregate times kernel") {
    const ContributionLog log = hand_log();
    const ImageBuffer err = hand_error();
    const std::vector<const ContributionLog*> logs{&log};
    const std::vector<Eigen::Vector3d> view_dirs{Eigen::Vector3d(0, 0, 1)};
    const std::vector<Eigen::Vector3d> samples{
        Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 0, -1)};

    const auto vis =
        directional_representation(logs, {}, view_dirs, Agg::Max, true, 8.0, samples);
    CHECK(vis.values[0][0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(vis.values[0][1] == doctest::Approx(0.5 * std::exp(-8.0)).epsilon(1e-13));
    CHECK(vis.values[0][2] == doctest::Approx(0.5 * std::exp(-16.0)).epsilon(1e-13));

    const auto errd =
        directional_representation(logs, {&err}, view_dirs, Agg::Sum, true, 8.0, samples);
    CHECK(errd.values[0][0] == doctest::Approx(1.08).epsilon(1e-14));
    CHECK(errd.values[0][1] == doctest::Approx(1.08 * std::exp(-8.0)).epsilon(1e-13));
}

TEST_CASE("two-view directional combination: max for visibility, mean for error") {
    const ContributionLog a = hand_log();
    ContributionLog b = hand_log();
    b.per_gaussian[0] = {{0, 0.25, 1.0}}; // aggregate 0.25
    const std::vector<const ContributionLog*> logs{&a, &b};
    const std::vector<Eigen::Vector3d> dirs{Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(1, 0, 0)};
    const std::vector<Eigen::Vector3d> sample{Eigen::Vector3d(0, 0, 1)};

    const auto vis = directional_representation(logs, {}, dirs, Agg::Max, true, 8.0, sample);
    // max(0.5 * 1, 0.25 * e^-8) = 0.5.
    CHECK(vis.values[0][0] == doctest::Approx(0.5).epsilon(1e-14));

    const ImageBuffer err = hand_error();
    ImageBuffer err2 = hand_error();
    const auto errd =
        directional_representation(logs, {&err, &err2}, dirs, Agg::Max, true, 8.0, sample);
    // mean(1.0 * 1, (2.0 * 0.25) * e^-8) over 2 views.
    CHECK(errd.values[0][0] ==
          doctest::Approx(0.5 * (1.0 + 0.5 * std::exp(-8.0))).epsilon(1e-13));
}

TEST_CASE("directional representation never exceeds its scalar counterpart") {
    Rng rng(91);
    const auto scene = ball_scene(rng, 12);
    std::vector<ContributionLog> logs;
    std::vector<Eigen::Vector3d> view_dirs;
    std::vector<Camera> cams;
    for (double angle : {-0.4, 0.0, 0.5}) {
        Camera cam = axis_camera();
        cam.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitY()).toRotationMatrix();
        // t = (0,0,4) puts the center at -4 * forward for any rotation.
        cam.translation = Eigen::Vector3d(0, 0, 4);
        cams.push_back(cam);
        logs.push_back(*render_view(scene, cam, ColorSource{}, true).log);
        view_dirs.push_back(cam.view_direction());
    }
    std::vector<const ContributionLog*> log_ptrs;
    for (auto& l : logs) log_ptrs.push_back(&l);

    const auto sample_dirs = fibonacci_sphere(64);
    const auto scalar = visibility_representation(log_ptrs, Agg::Sum, true);
    const auto dir =
        directional_representation(log_ptrs, {}, view_dirs, Agg::Sum, true, 8.0, sample_dirs);
    for (std::size_t k = 0; k < scene.size(); ++k) {
        double peak = 0.0;
        for (double v : dir.values[k]) peak = std::max(peak, v);
        CHECK(peak <= scalar.values[k] + 1e-12); // vMF weights are <= 1
    }
}

TEST_CASE("encode_directional reproduces a representable function") {
    // A single-view visibility function is aggregate * vmf; with a tiny kappa
    // it is nearly constant over the sphere, which degree 4 carries exactly.
    const ContributionLog log = hand_log();
    const std::vector<const ContributionLog*> logs{&log};
    const std::vector<Eigen::Vector3d> view_dirs{Eigen::Vector3d(0, 0, 1)};
    const auto samples = fibonacci_sphere(128);
    const auto sampled =
        directional_representation(logs, {}, view_dirs, Agg::Max, true, 1e-9, samples);
    const auto rep = encode_directional(sampled, RepKind::Visibility, Agg::Max, true, 1e-9);
    CHECK(rep.directional);
    CHECK(rep.sh_degree == 4);
    CHECK(rep.channel_name() == "vis-max-alpha-dir");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(sh_eval(rep.sh[0], samples[i], 4) ==
              doctest::Approx(sampled.values[0][i]).epsilon(1e-7));
    }
}

TEST_CASE("fov counter with hand-placed cameras") {
    // Two cameras on the z axis, 3 units out, facing the origin.
    Camera front; // at -3, looking +z
    front.fx = front.fy = 100;
    front.cx = front.cy = 16;
    front.width = front.height = 32;
    front.rotation = Eigen::Matrix3d::Identity();
    front.translation = Eigen::Vector3d(0, 0, 3);
    Camera back = front; // at +3, looking -z
    back.rotation = Eigen::Vector3d(1, -1, -1).asDiagonal();
    back.translation = Eigen::Vector3d(0, 0, 3);
    const std::vector<Camera> cams{front, back};

    GaussianScene scene;
    GaussianPrimitive g;
    g.mean = Eigen::Vector3d::Zero();
    scene.gaussians.push_back(g); // visible in both
    g.mean = Eigen::Vector3d(100, 0, 0);
    scene.gaussians.push_back(g); // far outside both frusta
    g.mean = Eigen::Vector3d(0, 0, -3);
    scene.gaussians.push_back(g); // sits on the front camera, behind its near plane
    g.mean = Eigen::Vector3d(0.54, 0, 0);
    scene.gaussians.push_back(g); // projects to px 34: only inside with margin

    auto rep = fov_counter(scene, cams, 0.1);
    CHECK(rep.values[0] == 2.0);
    CHECK(rep.values[1] == 0.0);
    CHECK(rep.values[2] == 1.0);
    CHECK(rep.values[3] == 2.0);
    CHECK(rep.channel_name() == "fov");

    rep = fov_counter(scene, cams, 0.0);
    CHECK(rep.values[3] == 0.0); // px 34 > 32: outside the strict frustum
    CHECK_THROWS_AS(fov_counter(scene, cams, -0.5), std::invalid_argument);
}

TEST_CASE("standard channel manifest") {
    const auto names = standard_channel_names(false);
    REQUIRE(names.size() == 13);
    CHECK(names[0] == "fov");
    CHECK(names[1] == "vis-max-alpha");
    CHECK(names[3] == "vis-mean-alpha");
    CHECK(names[4] == "vis-max-noalpha");
    CHECK(names[7] == "err-max-alpha");
    CHECK(names[12] == "err-mean-noalpha");
    const auto dir = standard_channel_names(true);
    CHECK(dir[1] == "vis-max-alpha-dir");
    CHECK(dir[0] == "fov");
}

TEST_CASE("build_feature_representations emits the manifest in order") {
    Rng rng(101);
    const auto scene = ball_scene(rng, 8);
    const Camera cam = axis_camera();
    const auto rr = render_view(scene, cam, ColorSource{}, true);
    ImageBuffer err(cam.width, cam.height, 1);
    for (auto& v : err.data) v = rng.uniform(0.0, 0.5);

    const auto reps = build_feature_representations(scene, {cam}, {&*rr.log}, {&err});
    REQUIRE(reps.size() == 13);
    const auto names = standard_channel_names(false);
    for (std::size_t i = 0; i < reps.size(); ++i) {
        CHECK(reps[i].channel_name() == names[i]);
        CHECK(reps[i].primitive_count() == scene.size());
    }
}

TEST_CASE("render_feature_maps composites scalar channels") {
    auto cs = centered_splat(0.5);
    PrimitiveRepresentation rep;
    rep.kind = RepKind::Visibility;
    rep.values = {2.0};
    const auto maps = render_feature_maps(cs.scene, {rep}, cs.cam);
    CHECK(maps.channel_names == std::vector<std::string>{"vis-max-alpha"});
    CHECK(maps.maps.at(cs.cx, cs.cy, 0) == doctest::Approx(1.0).epsilon(1e-15));

    SUBCASE("negative SH evaluations clamp to zero") {
        PrimitiveRepresentation neg;
        neg.kind = RepKind::Error;
        neg.directional = true;
        neg.kappa = 8.0;
        neg.sh_degree = 0;
        neg.sh = {Eigen::VectorXd::Constant(1, -1.0 / kSh0)};
        const auto m = render_feature_maps(cs.scene, {neg}, cs.cam);
        CHECK(m.maps.at(cs.cx, cs.cy, 0) == 0.0);
    }
}

TEST_CASE("pixel error maps: channel-mean L1 for color, masked validity for depth") {
    ImageBuffer gt(2, 1, 3), rendered(2, 1, 3);
    gt.at(0, 0, 0) = 0.5; gt.at(0, 0, 1) = 0.2; gt.at(0, 0, 2) = 0.8;
    rendered.at(0, 0, 0) = 0.4; rendered.at(0, 0, 1) = 0.5; rendered.at(0, 0, 2) = 0.8;
    const auto color = pixel_error_map(gt, rendered);
    CHECK(color.map.at(0, 0, 0) == doctest::Approx((0.1 + 0.3 + 0.0) / 3.0).epsilon(1e-14));
    CHECK(color.valid.at(0, 0, 0) == 1.0);

    ImageBuffer dgt(2, 1, 1), drender(2, 1, 1);
    dgt.at(0, 0, 0) = 3.0; drender.at(0, 0, 0) = 2.0;
    dgt.at(1, 0, 0) = 0.0; drender.at(1, 0, 0) = 5.0; // no ground truth here
    const auto depth = pixel_error_map(dgt, drender);
    CHECK(depth.map.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(depth.valid.at(0, 0, 0) == 1.0);
    CHECK(depth.valid.at(1, 0, 0) == 0.0);
}
