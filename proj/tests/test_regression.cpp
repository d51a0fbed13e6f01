#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "uegs/regression.hpp"
#include "uegs/synthetic.hpp"

using namespace uegs;

namespace {

PixelDataset make_dataset(std::size_t n_features, std::size_t rows) {
    PixelDataset ds;
    for (std::size_t f = 0; f < n_features; ++f)
        ds.feature_names.push_back(std::string(1, static_cast<char>('a' + f)));
    ds.features.resize(rows * n_features);
    ds.targets.resize(rows);
    return ds;
}

FeatureMapSet constant_maps(int w, int h, const std::vector<std::string>& names,
                            const std::vector<double>& values) {
    FeatureMapSet maps;
    maps.channel_names = names;
    maps.maps = ImageBuffer(w, h, static_cast<int>(names.size()));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (std::size_t c = 0; c < names.size(); ++c)
                maps.maps.at(x, y, static_cast<int>(c)) = values[c];
    return maps;
}

} // namespace

TEST_CASE("linear fit recovers planted weights exactly") {
    Rng rng(3);
    const Eigen::Vector3d w(1.25, -0.75, 0.5);
    const double intercept = 0.37;
    auto ds = make_dataset(3, 60);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        Eigen::Vector3d x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        for (int f = 0; f < 3; ++f) ds.features[r * 3 + f] = x[f];
        ds.targets[r] = w.dot(x) + intercept;
    }
    const LinearModel model = fit_linear(ds);
    CHECK(!model.degenerate_design);
    CHECK((model.weights - w).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(model.intercept == doctest::Approx(intercept).epsilon(1e-9));
    const auto fitted = predict_rows(model, ds);
    for (std::size_t r = 0; r < ds.rows(); ++r)
        CHECK(fitted[r] == doctest::Approx(ds.targets[r]).epsilon(1e-9));
}

TEST_CASE("duplicated columns mark the design degenerate") {
    Rng rng(13);
    auto ds = make_dataset(2, 40);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        const double x = rng.uniform(-1, 1);
        ds.features[r * 2] = x;
        ds.features[r * 2 + 1] = x; // identical column
        ds.targets[r] = 2.0 * x + 1.0;
    }
    const LinearModel model = fit_linear(ds);
    CHECK(model.degenerate_design);
    const auto fitted = predict_rows(model, ds);
    for (std::size_t r = 0; r < ds.rows(); ++r)
        CHECK(fitted[r] == doctest::Approx(ds.targets[r]).epsilon(1e-5));
}

TEST_CASE("depth-1 boosting round, hand oracle") {
    auto ds = make_dataset(1, 4);
    ds.features = {1, 2, 3, 4};
    ds.targets = {1, 1, 3, 3};
    GbdtParams params;
    params.n_trees = 1;
    params.max_depth = 1;
    params.learning_rate = 1.0;
    params.min_leaf = 1;
    const GBDTModel model = fit_gbdt(ds, params);
    CHECK(model.base_score == doctest::Approx(2.0).epsilon(1e-15));
    REQUIRE(model.trees.size() == 1);
    const auto& nodes = model.trees[0].nodes;
    REQUIRE(nodes.size() == 3);
    CHECK(nodes[0].feature == 0);
    // Split candidates are midpoints 1.5/2.5/3.5 with gains 4/3, 4, 4/3.
    CHECK(nodes[0].threshold == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(nodes[nodes[0].left].leaf_value == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(nodes[nodes[0].right].leaf_value == doctest::Approx(1.0).epsilon(1e-14));
    const double x_lo = 1.5, x_hi = 3.7;
    CHECK(model.predict_row(&x_lo) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(model.predict_row(&x_hi) == doctest::Approx(3.0).epsilon(1e-14));

    SUBCASE("learning rate scales the tree output only") {
        params.learning_rate = 0.5;
        const GBDTModel damped = fit_gbdt(ds, params);
        CHECK(damped.predict_row(&x_lo) == doctest::Approx(1.5).epsilon(1e-14));
        CHECK(damped.predict_row(&x_hi) == doctest::Approx(2.5).epsilon(1e-14));
    }
    SUBCASE("min_leaf and the gain floor can forbid every split") {
        // min_leaf = 2 leaves only the middle threshold, and the alternating
        // targets give it zero gain, so the tree stays a single leaf.
        params.min_leaf = 2;
        ds.targets = {1, 3, 1, 3};
        const GBDTModel stump = fit_gbdt(ds, params);
        REQUIRE(stump.trees.size() == 1);
        CHECK(stump.trees[0].nodes.size() == 1);
        CHECK(stump.trees[0].nodes[0].is_leaf());
        CHECK(stump.predict_row(&x_lo) == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("too few rows for min_leaf is rejected outright") {
        params.min_leaf = 3; // 4 rows < 2 * min_leaf
        CHECK_THROWS_AS(fit_gbdt(ds, params), std::invalid_argument);
    }
}

TEST_CASE("boosting is invariant to row order") {
    Rng rng(23);
    auto ds = make_dataset(3, 80);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (int f = 0; f < 3; ++f) ds.features[r * 3 + f] = rng.uniform(-2, 2);
        ds.targets[r] = ds.features[r * 3] * 1.5 - ds.features[r * 3 + 2] + 0.2 * rng.normal();
    }
    GbdtParams params;
    params.n_trees = 12;
    params.max_depth = 3;
    params.min_leaf = 4;

    // Deterministic shuffle of whole rows.
    std::vector<std::size_t> order(ds.rows());
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    auto shuffled = make_dataset(3, ds.rows());
    for (std::size_t r = 0; r < order.size(); ++r) {
        for (int f = 0; f < 3; ++f) shuffled.features[r * 3 + f] = ds.feature(order[r], f);
        shuffled.targets[r] = ds.targets[order[r]];
    }

    CHECK(serialize_model(fit_gbdt(ds, params)) == serialize_model(fit_gbdt(shuffled, params)));
}

TEST_CASE("training MSE is non-increasing over rounds") {
    Rng rng(33);
    auto ds = make_dataset(4, 150);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        double acc = 0.1;
        for (int f = 0; f < 4; ++f) {
            const double v = rng.uniform(-1, 1);
            ds.features[r * 4 + f] = v;
            acc += (f % 2 ? -0.7 : 1.1) * v;
        }
        ds.targets[r] = acc + 0.3 * rng.normal();
    }
    GbdtParams params;
    params.n_trees = 30;
    params.min_leaf = 5;
    std::vector<double> history;
    fit_gbdt(ds, params, &history);
    REQUIRE(history.size() == 30);
    for (std::size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1] + 1e-12);
}

TEST_CASE("map prediction looks channels up by name") {
    LinearModel model;
    model.feature_names = {"b", "a"};
    model.weights = Eigen::VectorXd(2);
    model.weights << 1.0, 10.0;
    model.intercept = 0.0;
    const auto maps = constant_maps(3, 2, {"a", "b", "c"}, {2.0, 3.0, 99.0});
    const ImageBuffer out = predict(model, maps);
    for (double v : out.data) CHECK(v == doctest::Approx(23.0).epsilon(1e-14));

    LinearModel missing = model;
    missing.feature_names = {"b", "zap"};
    CHECK_THROWS_AS(predict(missing, maps), std::invalid_argument);
}

TEST_CASE("model serialization round trips bit-exactly") {
    Rng rng(43);
    auto ds = make_dataset(3, 60);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (int f = 0; f < 3; ++f) ds.features[r * 3 + f] = rng.uniform(-3, 3);
        ds.targets[r] = std::sin(ds.features[r * 3]) + 0.5 * ds.features[r * 3 + 1];
    }
    GbdtParams params;
    params.n_trees = 8;
    params.min_leaf = 4;
    const GBDTModel model = fit_gbdt(ds, params);
    const std::string text = serialize_model(model);
    CHECK(model_type_of(text) == "gbdt");
    const GBDTModel back = parse_gbdt_model(text);
    CHECK(serialize_model(back) == text);
    const auto a = predict_rows(model, ds);
    const auto b = predict_rows(back, ds);
    for (std::size_t r = 0; r < ds.rows(); ++r) CHECK(a[r] == b[r]);

    const LinearModel lin = fit_linear(ds);
    const std::string lin_text = serialize_model(lin);
    CHECK(model_type_of(lin_text) == "linear");
    const LinearModel lin_back = parse_linear_model(lin_text);
    CHECK(serialize_model(lin_back) == lin_text);
    CHECK(lin_back.degenerate_design == lin.degenerate_design);
    CHECK_THROWS_AS(parse_linear_model(text), std::runtime_error); // wrong model type
}

TEST_CASE("dataset subset and validation") {
    auto ds = make_dataset(3, 2);
    ds.features = {1, 2, 3, 4, 5, 6};
    ds.targets = {10, 20};
    const auto sub = ds.subset({"c", "a"});
    CHECK(sub.feature_names == std::vector<std::string>{"c", "a"});
    CHECK(sub.features == std::vector<double>{3, 1, 6, 4});
    CHECK(sub.targets == ds.targets);
    CHECK_THROWS_AS(ds.subset({"nope"}), std::invalid_argument);

    ds.features.pop_back();
    CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
}

TEST_CASE("assemble_dataset flattens unmasked pixels in view order") {
    const auto maps0 = constant_maps(2, 1, {"x", "y"}, {1.0, 2.0});
    auto maps1 = constant_maps(2, 1, {"x", "y"}, {5.0, 6.0});
    maps1.maps.at(1, 0, 0) = 7.0;
    ImageBuffer t0(2, 1, 1, 0.5), t1(2, 1, 1, 0.9);
    ImageBuffer mask(2, 1, 1, 1.0);
    mask.at(0, 0, 0) = 0.0; // drop view 1 pixel 0

    const auto ds = assemble_dataset({{"v0", &maps0, &t0, nullptr}, {"v1", &maps1, &t1, &mask}});
    REQUIRE(ds.rows() == 3);
    CHECK(ds.feature_names == std::vector<std::string>{"x", "y"});
    CHECK(ds.features == std::vector<double>{1, 2, 1, 2, 7, 6});
    CHECK(ds.targets == std::vector<double>{0.5, 0.5, 0.9});
    CHECK(ds.provenance[0] == std::make_pair(std::string("v0"), std::uint32_t{0}));
    CHECK(ds.provenance[2] == std::make_pair(std::string("v1"), std::uint32_t{1}));

    SUBCASE("inconsistent manifests throw") {
        const auto other = constant_maps(2, 1, {"x", "z"}, {0.0, 0.0});
        CHECK_THROWS_AS(assemble_dataset({{"v0", &maps0, &t0, nullptr},
                                          {"v1", &other, &t1, nullptr}}),
                        std::invalid_argument);
    }
    SUBCASE("fully masked input throws") {
        ImageBuffer none(2, 1, 1, 0.0);
        CHECK_THROWS_AS(assemble_dataset({{"v0", &maps0, &t0, &none}}), std::invalid_argument);
    }
}

TEST_CASE("backward selection keeps the informative feature") {
    Rng rng(53);
    auto ds = make_dataset(3, 80);
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (int f = 0; f < 3; ++f) ds.features[r * 3 + f] = rng.uniform(0, 1);
        ds.targets[r] = ds.features[r * 3 + 1]; // feature "b" is the target
    }

    FeatureMapSet eval_maps;
    eval_maps.channel_names = {"a", "b", "c"};
    eval_maps.maps = ImageBuffer(8, 8, 3);
    for (auto& v : eval_maps.maps.data) v = rng.uniform(0, 1);
    ImageBuffer target(8, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) target.at(x, y, 0) = eval_maps.maps.at(x, y, 1);

    GbdtParams params;
    params.n_trees = 20;
    params.max_depth = 3;
    params.learning_rate = 0.3;
    params.min_leaf = 5;
    const auto trace =
        backward_selection(ds, {{&eval_maps, &target, nullptr}}, params);
    REQUIRE(trace.steps.size() == 2);
    CHECK(trace.steps[1].surviving == std::vector<std::string>{"b"});
    CHECK(trace.steps_survived.at("b") == 2);
    CHECK(trace.steps_survived.at(trace.steps[0].dropped) == 1);
    CHECK(trace.steps[1].score > 0.9);

    CHECK_THROWS_AS(backward_selection(ds, {}, params), std::invalid_argument);
}
