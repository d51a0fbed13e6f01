#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "uegs/render.hpp"

using namespace uegs;
using testutil::axis_camera;
using testutil::ball_scene;
using testutil::centered_splat;

namespace {

ValueSource one_channel(const std::vector<std::vector<double>>& values) {
    return ValueSource{&values};
}

} // namespace

TEST_CASE("EWA projection closed form on the optical axis") {
    auto cs = centered_splat(0.5, 0.1, 5.0);
    const auto splat = project_gaussian(cs.scene.gaussians[0], cs.cam);
    REQUIRE(splat.has_value());
    CHECK(splat->depth == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(splat->mean2d.x() == doctest::Approx(32.5).epsilon(1e-15));
    CHECK(splat->mean2d.y() == doctest::Approx(32.5).epsilon(1e-15));
    // J = diag(fx/z, fy/z) = diag(20); cov2d = (20 * 0.1)^2 I + 0.3 I.
    CHECK(splat->cov2d(0, 0) == doctest::Approx(4.3).epsilon(1e-12));
    CHECK(splat->cov2d(1, 1) == doctest::Approx(4.3).epsilon(1e-12));
    CHECK(std::abs(splat->cov2d(0, 1)) < 1e-12);
}

TEST_CASE("EWA projection off axis picks up the perspective shear term") {
    auto cs = centered_splat(0.5, 0.1, 5.0);
    cs.scene.gaussians[0].mean = Eigen::Vector3d(1, 0, 5);
    const auto splat = project_gaussian(cs.scene.gaussians[0], cs.cam);
    REQUIRE(splat.has_value());
    CHECK(splat->mean2d.x() == doctest::Approx(52.5).epsilon(1e-14)); // 100/5 + 32.5
    // J = [[20,0,-4],[0,20,0]]; sigma = 0.01 I =>
    // cov2d = [[4.16, 0], [0, 4.0]] + 0.3 I.
    CHECK(splat->cov2d(0, 0) == doctest::Approx(4.46).epsilon(1e-12));
    CHECK(splat->cov2d(1, 1) == doctest::Approx(4.3).epsilon(1e-12));
    CHECK(std::abs(splat->cov2d(0, 1)) < 1e-12);
}

TEST_CASE("primitives at or behind the near plane are culled") {
    auto cs = centered_splat();
    GaussianPrimitive g = cs.scene.gaussians[0];
    g.mean = Eigen::Vector3d(0, 0, 0.005);
    CHECK(!project_gaussian(g, cs.cam).has_value());
    g.mean = Eigen::Vector3d(0, 0, 0.01); // exactly on the near plane
    CHECK(!project_gaussian(g, cs.cam).has_value());
    g.mean = Eigen::Vector3d(0, 0, -5);
    CHECK(!project_gaussian(g, cs.cam).has_value());
}

TEST_CASE("project_sorted orders by depth") {
    GaussianScene scene;
    for (double z : {7.0, 3.0, 5.0}) {
        GaussianPrimitive g;
        g.mean = Eigen::Vector3d(0, 0, z);
        g.scale = Eigen::Vector3d::Constant(0.05);
        g.opacity = 0.5;
        scene.gaussians.push_back(g);
    }
    const auto splats = project_sorted(scene, centered_splat().cam);
    REQUIRE(splats.size() == 3);
    CHECK(splats[0].gaussian_index == 1);
    CHECK(splats[1].gaussian_index == 2);
    CHECK(splats[2].gaussian_index == 0);
    CHECK(splats[0].depth < splats[1].depth);
    CHECK(splats[1].depth < splats[2].depth);
}

TEST_CASE("single splat composites to alpha times value at the exact hit") {
    auto cs = centered_splat(0.5);
    const std::vector<std::vector<double>> values{{2.0}};
    const auto rr = render_view(cs.scene, cs.cam, one_channel(values), true);
    CHECK(rr.image.at(cs.cx, cs.cy, 0) == doctest::Approx(1.0).epsilon(1e-15));

    // The log carries the same alpha/transmittance the compositor used.
    REQUIRE(rr.log.has_value());
    const std::uint32_t center = static_cast<std::uint32_t>(cs.cy) * cs.cam.width + cs.cx;
    bool found = false;
    for (const auto& e : rr.log->per_gaussian[0]) {
        if (e.pixel == center) {
            found = true;
            CHECK(e.alpha == doctest::Approx(0.5).epsilon(1e-15));
            CHECK(e.transmittance == 1.0);
        }
    }
    CHECK(found);
}

TEST_CASE("two stacked splats composite front to back") {
    auto cs = centered_splat(0.5, 0.05, 5.0);
    GaussianPrimitive back = cs.scene.gaussians[0];
    back.mean = Eigen::Vector3d(0, 0, 10);
    cs.scene.gaussians.push_back(back);

    const std::vector<std::vector<double>> values{{2.0, 1.0}};
    const auto rr = render_view(cs.scene, cs.cam, one_channel(values));
    // C = 0.5*2 + (1-0.5)*0.5*1 = 1.25.
    CHECK(rr.image.at(cs.cx, cs.cy, 0) == doctest::Approx(1.25).epsilon(1e-15));

    SUBCASE("composite_pixel reports the same chain") {
        const auto splats = project_sorted(cs.scene, cs.cam);
        const auto [value, contribs] =
            composite_pixel(splats, Eigen::Vector2d(32.5, 32.5), values[0]);
        CHECK(value == doctest::Approx(1.25).epsilon(1e-15));
        REQUIRE(contribs.size() == 2);
        CHECK(contribs[0].gaussian_index == 0);
        CHECK(contribs[0].alpha == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(contribs[0].transmittance == 1.0);
        CHECK(contribs[1].gaussian_index == 1);
        CHECK(contribs[1].transmittance == doctest::Approx(0.5).epsilon(1e-15));
    }

    SUBCASE("depth channels, raw and normalized") {
        const auto raw = render_view(cs.scene, cs.cam, DepthSource{false});
        // 0.5*5 + 0.25*10 = 5.
        CHECK(raw.image.at(cs.cx, cs.cy, 0) == doctest::Approx(5.0).epsilon(1e-14));
        const auto norm = render_view(cs.scene, cs.cam, DepthSource{true});
        // weight = 0.75 => 5 / 0.75.
        CHECK(norm.image.at(cs.cx, cs.cy, 0) == doctest::Approx(5.0 / 0.75).epsilon(1e-14));
    }
}

TEST_CASE("alpha clamps at 0.99") {
    auto cs = centered_splat(0.995);
    const std::vector<std::vector<double>> values{{1.0}};
    const auto rr = render_view(cs.scene, cs.cam, one_channel(values));
    CHECK(rr.image.at(cs.cx, cs.cy, 0) == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("sub-threshold splats are skipped without attenuating") {
    auto cs = centered_splat(0.003, 0.05, 5.0); // below alpha_min = 1/255
    GaussianPrimitive back = cs.scene.gaussians[0];
    back.mean = Eigen::Vector3d(0, 0, 10);
    back.opacity = 0.5;
    cs.scene.gaussians.push_back(back);

    const std::vector<std::vector<double>> values{{100.0, 1.0}};
    const auto rr = render_view(cs.scene, cs.cam, one_channel(values), true);
    // The faint front splat contributes nothing and must not reduce T for
    // the back one: C = 0.5 * 1 with T still 1.
    CHECK(rr.image.at(cs.cx, cs.cy, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rr.log->per_gaussian[0].empty());
}

TEST_CASE("contribution log entries are sorted by pixel") {
    Rng rng(21);
    const auto scene = ball_scene(rng, 12);
    const auto rr = render_view(scene, axis_camera(), ColorSource{}, true);
    REQUIRE(rr.log.has_value());
    std::size_t entries = 0;
    for (const auto& per : rr.log->per_gaussian) {
        for (std::size_t i = 1; i < per.size(); ++i) CHECK(per[i - 1].pixel < per[i].pixel);
        entries += per.size();
    }
    CHECK(entries == rr.log->entry_count());
    CHECK(entries > 0);
}

TEST_CASE("render matches the unoptimized reference") {
    Rng rng(31);
    const auto scene = ball_scene(rng, 20);
    const Camera cam = axis_camera(32);
    const auto fast = render_view(scene, cam, ColorSource{}).image;
    const auto slow = reference_render(scene, cam, ColorSource{});
    double worst = 0.0;
    for (std::size_t i = 0; i < fast.data.size(); ++i)
        worst = std::max(worst, std::abs(fast.data[i] - slow.data[i]));
    CHECK(worst <= 1e-4);
}

TEST_CASE("output is invariant to primitive storage order") {
    Rng rng(41);
    const auto scene = ball_scene(rng, 25);
    GaussianScene reversed;
    reversed.gaussians.assign(scene.gaussians.rbegin(), scene.gaussians.rend());
    const Camera cam = axis_camera();
    const auto a = render_view(scene, cam, ColorSource{}).image;
    const auto b = render_view(reversed, cam, ColorSource{}).image;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    CHECK(worst == 0.0); // depths are distinct, so the composite order is identical
}

TEST_CASE("compositing is linear in the channel values") {
    Rng rng(51);
    const auto scene = ball_scene(rng, 15);
    std::vector<std::vector<double>> values(1, std::vector<double>(scene.size()));
    for (auto& v : values[0]) v = rng.uniform(-1, 1);
    std::vector<std::vector<double>> doubled = values;
    for (auto& v : doubled[0]) v *= 2.0;

    const Camera cam = axis_camera();
    const auto a = render_view(scene, cam, one_channel(values)).image;
    const auto b = render_view(scene, cam, one_channel(doubled)).image;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(2.0 * a.data[i] - b.data[i]));
    CHECK(worst == 0.0); // scaling by 2 is exact in IEEE arithmetic
}

TEST_CASE("per-pixel traversal conserves opacity mass") {
    Rng rng(61);
    const auto scene = ball_scene(rng, 15);
    double worst = 0.0;
    for_each_pixel_contributions(scene, axis_camera(),
                                 [&](int, int, const std::vector<CompositedSplat>& contribs) {
                                     double sum = 0.0, prod = 1.0, last_t = 1.0 + 1e-15;
                                     for (const auto& c : contribs) {
                                         CHECK(c.transmittance < last_t);
                                         last_t = c.transmittance;
                                         sum += c.alpha * c.transmittance;
                                         prod *= 1.0 - c.alpha;
                                     }
                                     worst = std::max(worst, std::abs(sum - (1.0 - prod)));
                                 });
    CHECK(worst <= 1e-12);
}

TEST_CASE("per-gaussian view directions point from the camera center") {
    GaussianScene scene;
    GaussianPrimitive g;
    g.mean = Eigen::Vector3d(3, 0, 4);
    scene.gaussians.push_back(g);
    g.mean = Eigen::Vector3d(0, 0, 5);
    scene.gaussians.push_back(g);
    Camera cam = centered_splat().cam; // center at the origin
    const auto dirs = per_gaussian_view_directions(scene, cam);
    REQUIRE(dirs.size() == 2);
    CHECK(dirs[0].isApprox(Eigen::Vector3d(0.6, 0, 0.8), 1e-14));
    CHECK(dirs[1].isApprox(Eigen::Vector3d(0, 0, 1), 1e-14));
}

TEST_CASE("empty scene renders to zeros with an empty log") {
    GaussianScene scene;
    const auto rr = render_view(scene, axis_camera(), DepthSource{false}, true);
    CHECK(*std::max_element(rr.image.data.begin(), rr.image.data.end()) == 0.0);
    REQUIRE(rr.log.has_value());
    CHECK(rr.log->entry_count() == 0);
}
