#include "uegs/regression.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "uegs/metrics.hpp"
#include "uegs/parallel.hpp"

namespace uegs {

namespace {

using json = nlohmann::json;

std::size_t channel_index(const FeatureMapSet& maps, const std::string& name) {
    for (std::size_t i = 0; i < maps.channel_names.size(); ++i) {
        if (maps.channel_names[i] == name) return i;
    }
    throw std::invalid_argument("feature map manifest is missing channel '" + name + "'");
}

std::vector<std::size_t> model_channel_indices(const std::vector<std::string>& feature_names,
                                               const FeatureMapSet& maps) {
    std::vector<std::size_t> idx;
    idx.reserve(feature_names.size());
    for (const auto& name : feature_names) idx.push_back(channel_index(maps, name));
    return idx;
}

template <typename Model>
ImageBuffer predict_maps(const Model& model, const FeatureMapSet& maps) {
    maps.validate();
    const auto idx = model_channel_indices(model.feature_names, maps);
    const int w = maps.maps.width, h = maps.maps.height;
    ImageBuffer result(w, h, 1);
    const std::size_t n_features = idx.size();
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row_begin, std::size_t row_end) {
        std::vector<double> x(n_features);
        for (std::size_t y = row_begin; y < row_end; ++y) {
            for (int px = 0; px < w; ++px) {
                for (std::size_t f = 0; f < n_features; ++f) {
                    x[f] = maps.maps.at(px, static_cast<int>(y), static_cast<int>(idx[f]));
                }
                result.data[y * static_cast<std::size_t>(w) + px] = model.predict_row(x.data());
            }
        }
    });
    return result;
}

} // namespace

PixelDataset PixelDataset::subset(const std::vector<std::string>& names) const {
    std::vector<std::size_t> cols;
    cols.reserve(names.size());
    for (const auto& name : names) {
        auto it = std::find(feature_names.begin(), feature_names.end(), name);
        if (it == feature_names.end()) {
            throw std::invalid_argument("dataset has no feature named '" + name + "'");
        }
        cols.push_back(static_cast<std::size_t>(it - feature_names.begin()));
    }
    PixelDataset out;
    out.feature_names = names;
    out.targets = targets;
    out.provenance = provenance;
    out.features.resize(rows() * cols.size());
    for (std::size_t r = 0; r < rows(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out.features[r * cols.size() + c] = feature(r, cols[c]);
        }
    }
    return out;
}

void PixelDataset::validate() const {
    if (feature_names.empty()) throw std::invalid_argument("dataset has no features");
    if (targets.empty()) throw std::invalid_argument("dataset has no rows");
    if (features.size() != targets.size() * feature_names.size()) {
        throw std::invalid_argument("dataset feature matrix size mismatch");
    }
    if (!provenance.empty() && provenance.size() != targets.size()) {
        throw std::invalid_argument("dataset provenance size mismatch");
    }
    for (double v : features) {
        if (!std::isfinite(v)) throw std::invalid_argument("dataset contains non-finite feature");
    }
    for (double v : targets) {
        if (!std::isfinite(v)) throw std::invalid_argument("dataset contains non-finite target");
    }
}

PixelDataset assemble_dataset(const std::vector<ViewSample>& views) {
    if (views.empty()) throw std::invalid_argument("assemble_dataset: no views");
    PixelDataset ds;
    ds.feature_names = views.front().maps->channel_names;
    const std::size_t n_features = ds.feature_names.size();
    for (const auto& view : views) {
        if (view.maps == nullptr || view.target == nullptr) {
            throw std::invalid_argument("assemble_dataset: null view inputs");
        }
        view.maps->validate();
        if (view.maps->channel_names != ds.feature_names) {
            throw std::invalid_argument("assemble_dataset: inconsistent channel manifests");
        }
        const ImageBuffer& maps = view.maps->maps;
        const ImageBuffer& target = *view.target;
        if (target.channels != 1 || target.width != maps.width || target.height != maps.height) {
            throw std::invalid_argument("assemble_dataset: target shape mismatch");
        }
        if (view.mask != nullptr &&
            (view.mask->channels != 1 || view.mask->width != maps.width ||
             view.mask->height != maps.height)) {
            throw std::invalid_argument("assemble_dataset: mask shape mismatch");
        }
        for (int y = 0; y < maps.height; ++y) {
            for (int x = 0; x < maps.width; ++x) {
                if (view.mask != nullptr && view.mask->at(x, y, 0) == 0.0) continue;
                for (std::size_t c = 0; c < n_features; ++c) {
                    ds.features.push_back(maps.at(x, y, static_cast<int>(c)));
                }
                ds.targets.push_back(target.at(x, y, 0));
                ds.provenance.emplace_back(
                    view.view_id,
                    static_cast<std::uint32_t>(y) * static_cast<std::uint32_t>(maps.width) +
                        static_cast<std::uint32_t>(x));
            }
        }
    }
    if (ds.targets.empty()) throw std::invalid_argument("assemble_dataset: every pixel masked out");
    ds.validate();
    return ds;
}

double LinearModel::predict_row(const double* x) const {
    double acc = intercept;
    for (Eigen::Index i = 0; i < weights.size(); ++i) acc += weights[i] * x[i];
    return acc;
}

LinearModel fit_linear(const PixelDataset& ds) {
    ds.validate();
    const std::size_t n = ds.rows();
    const std::size_t f = ds.n_features();
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> x(ds.features.data(), static_cast<Eigen::Index>(n),
                               static_cast<Eigen::Index>(f));
    Eigen::Map<const Eigen::VectorXd> y(ds.targets.data(), static_cast<Eigen::Index>(n));

    const Eigen::Index dim = static_cast<Eigen::Index>(f) + 1;
    Eigen::MatrixXd normal(dim, dim);
    normal.topLeftCorner(f, f) = x.transpose() * x;
    Eigen::VectorXd col_sums = x.colwise().sum().transpose();
    normal.topRightCorner(f, 1) = col_sums;
    normal.bottomLeftCorner(1, f) = col_sums.transpose();
    normal(dim - 1, dim - 1) = static_cast<double>(n);
    Eigen::VectorXd rhs(dim);
    rhs.head(f) = x.transpose() * y;
    rhs(dim - 1) = y.sum();

    LinearModel model;
    model.feature_names = ds.feature_names;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
    model.degenerate_design = qr.rank() < dim;

    Eigen::MatrixXd regularized = normal;
    regularized.diagonal().array() += 1e-8;
    Eigen::VectorXd solution = regularized.ldlt().solve(rhs);
    model.weights = solution.head(f);
    model.intercept = solution(dim - 1);
    return model;
}

double Tree::evaluate(const double* x) const {
    int node = 0;
    while (!nodes[node].is_leaf()) {
        node = x[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                              : nodes[node].right;
    }
    return nodes[node].leaf_value;
}

double GBDTModel::predict_row(const double* x) const {
    double acc = base_score;
    for (const auto& tree : trees) acc += params.learning_rate * tree.evaluate(x);
    return acc;
}

namespace {

/// Recursive exact-greedy tree builder. Row indices are carried per feature
/// in a canonical sorted order (feature value, then the full row, then the
/// target as tie-breaks), so every reduction below sums identical values in
/// an order independent of the dataset's row order.
class TreeBuilder {
public:
    TreeBuilder(const PixelDataset& ds, const std::vector<double>& residual,
                const GbdtParams& params)
        : ds_(ds), residual_(residual), params_(params) {}

    Tree build(const std::vector<std::vector<std::uint32_t>>& root_orders) {
        tree_.nodes.clear();
        build_node(root_orders, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        double gain = 0.0;
        int feature = -1;
        double threshold = 0.0;
    };

    int build_node(const std::vector<std::vector<std::uint32_t>>& orders, int depth) {
        const int index = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();

        const auto& primary = orders[0];
        const std::size_t n = primary.size();
        double sum = 0.0, sum_sq = 0.0;
        for (std::uint32_t row : primary) {
            const double r = residual_[row];
            sum += r;
            sum_sq += r * r;
        }

        Split best;
        if (depth < params_.max_depth && n >= 2 * static_cast<std::size_t>(params_.min_leaf)) {
            best = find_split(orders, sum);
        }
        const double gain_floor = 1e-12 * std::max(1.0, sum_sq);
        if (best.feature < 0 || !(best.gain > gain_floor)) {
            tree_.nodes[index].leaf_value = sum / static_cast<double>(n);
            return index;
        }

        std::vector<std::vector<std::uint32_t>> left(orders.size()), right(orders.size());
        for (std::size_t f = 0; f < orders.size(); ++f) {
            left[f].reserve(n);
            right[f].reserve(n);
            for (std::uint32_t row : orders[f]) {
                const bool goes_left = ds_.feature(row, static_cast<std::size_t>(best.feature)) <
                                       best.threshold;
                (goes_left ? left[f] : right[f]).push_back(row);
            }
        }
        tree_.nodes[index].feature = best.feature;
        tree_.nodes[index].threshold = best.threshold;
        const int l = build_node(left, depth + 1);
        const int r = build_node(right, depth + 1);
        tree_.nodes[index].left = l;
        tree_.nodes[index].right = r;
        return index;
    }

    Split find_split(const std::vector<std::vector<std::uint32_t>>& orders, double total) const {
        Split best;
        const std::size_t n = orders[0].size();
        const std::size_t min_leaf = static_cast<std::size_t>(params_.min_leaf);
        const double parent_score = total * total / static_cast<double>(n);
        for (std::size_t f = 0; f < orders.size(); ++f) {
            const auto& order = orders[f];
            double left_sum = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left_sum += residual_[order[i]];
                const std::size_t left_count = i + 1;
                if (left_count < min_leaf) continue;
                if (n - left_count < min_leaf) break;
                const double lo = ds_.feature(order[i], f);
                const double hi = ds_.feature(order[i + 1], f);
                if (lo == hi) continue;
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(left_count) +
                                    right_sum * right_sum / static_cast<double>(n - left_count) -
                                    parent_score;
                if (gain > best.gain) {
                    double mid = lo + 0.5 * (hi - lo);
                    if (!(mid > lo)) mid = hi; // adjacent doubles: keep lo strictly left
                    best = Split{gain, static_cast<int>(f), mid};
                }
            }
        }
        return best;
    }

    const PixelDataset& ds_;
    const std::vector<double>& residual_;
    const GbdtParams& params_;
    Tree tree_;
};

/// Canonical per-feature row orders. Rows that compare equal under this key
/// are fully identical (all features and the target), so they carry equal
/// residuals throughout boosting and any ordering among them sums alike.
std::vector<std::vector<std::uint32_t>> canonical_orders(const PixelDataset& ds) {
    const std::size_t n = ds.rows();
    const std::size_t n_features = ds.n_features();
    std::vector<std::vector<std::uint32_t>> orders(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
        auto& order = orders[f];
        order.resize(n);
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double va = ds.feature(a, f), vb = ds.feature(b, f);
            if (va != vb) return va < vb;
            for (std::size_t j = 0; j < n_features; ++j) {
                const double xa = ds.feature(a, j), xb = ds.feature(b, j);
                if (xa != xb) return xa < xb;
            }
            return ds.targets[a] < ds.targets[b];
        });
    }
    return orders;
}

} // namespace

GBDTModel fit_gbdt(const PixelDataset& ds, const GbdtParams& params,
                   std::vector<double>* mse_history) {
    ds.validate();
    if (params.n_trees < 1 || params.max_depth < 1 || params.min_leaf < 1 ||
        !(params.learning_rate > 0.0)) {
        throw std::invalid_argument("fit_gbdt: invalid hyperparameters");
    }
    const std::size_t n = ds.rows();
    if (n < 2 * static_cast<std::size_t>(params.min_leaf)) {
        throw std::invalid_argument("fit_gbdt: fewer rows than twice min_leaf");
    }

    GBDTModel model;
    model.params = params;
    model.feature_names = ds.feature_names;
    {
        std::vector<double> sorted = ds.targets;
        std::sort(sorted.begin(), sorted.end());
        double sum = 0.0;
        for (double v : sorted) sum += v;
        model.base_score = sum / static_cast<double>(n);
    }

    const auto root_orders = canonical_orders(ds);
    std::vector<double> prediction(n, model.base_score);
    std::vector<double> residual(n);
    std::vector<double> row(ds.n_features());
    if (mse_history != nullptr) mse_history->clear();

    model.trees.reserve(static_cast<std::size_t>(params.n_trees));
    for (int t = 0; t < params.n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = ds.targets[i] - prediction[i];
        TreeBuilder builder(ds, residual, params);
        Tree tree = builder.build(root_orders);
        double mse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            prediction[i] +=
                params.learning_rate * tree.evaluate(&ds.features[i * ds.n_features()]);
            const double err = ds.targets[i] - prediction[i];
            mse += err * err;
        }
        if (mse_history != nullptr) mse_history->push_back(mse / static_cast<double>(n));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

ImageBuffer predict(const GBDTModel& model, const FeatureMapSet& maps) {
    return predict_maps(model, maps);
}

ImageBuffer predict(const LinearModel& model, const FeatureMapSet& maps) {
    return predict_maps(model, maps);
}

std::vector<double> predict_rows(const GBDTModel& model, const PixelDataset& ds) {
    if (ds.feature_names != model.feature_names) {
        throw std::invalid_argument("predict_rows: dataset features do not match the model");
    }
    std::vector<double> out(ds.rows());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        out[i] = model.predict_row(&ds.features[i * ds.n_features()]);
    }
    return out;
}

std::vector<double> predict_rows(const LinearModel& model, const PixelDataset& ds) {
    if (ds.feature_names != model.feature_names) {
        throw std::invalid_argument("predict_rows: dataset features do not match the model");
    }
    std::vector<double> out(ds.rows());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        out[i] = model.predict_row(&ds.features[i * ds.n_features()]);
    }
    return out;
}

namespace {

constexpr int kModelVersion = 1;

void check_header(const json& j, const std::string& expected_type) {
    if (!j.is_object() || j.value("format", "") != "uegs-model") {
        throw std::runtime_error("model file: missing uegs-model header");
    }
    if (j.value("version", 0) != kModelVersion) {
        throw std::runtime_error("model file: unsupported version");
    }
    if (j.value("type", "") != expected_type) {
        throw std::runtime_error("model file: expected type '" + expected_type + "', found '" +
                                 j.value("type", "") + "'");
    }
}

} // namespace

std::string serialize_model(const GBDTModel& model) {
    json j;
    j["format"] = "uegs-model";
    j["version"] = kModelVersion;
    j["type"] = "gbdt";
    j["feature_names"] = model.feature_names;
    j["base_score"] = model.base_score;
    j["params"] = {{"n_trees", model.params.n_trees},
                   {"max_depth", model.params.max_depth},
                   {"learning_rate", model.params.learning_rate},
                   {"min_leaf", model.params.min_leaf}};
    json trees = json::array();
    for (const auto& tree : model.trees) {
        json nodes = json::array();
        for (const auto& node : tree.nodes) {
            nodes.push_back(
                json::array({node.feature, node.threshold, node.left, node.right, node.leaf_value}));
        }
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j.dump(2) + "\n";
}

std::string serialize_model(const LinearModel& model) {
    json j;
    j["format"] = "uegs-model";
    j["version"] = kModelVersion;
    j["type"] = "linear";
    j["feature_names"] = model.feature_names;
    j["intercept"] = model.intercept;
    j["weights"] = std::vector<double>(model.weights.data(),
                                       model.weights.data() + model.weights.size());
    j["degenerate_design"] = model.degenerate_design;
    return j.dump(2) + "\n";
}

GBDTModel parse_gbdt_model(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("model file: ") + e.what());
    }
    check_header(j, "gbdt");
    GBDTModel model;
    try {
        model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        model.base_score = j.at("base_score").get<double>();
        const json& p = j.at("params");
        model.params.n_trees = p.at("n_trees").get<int>();
        model.params.max_depth = p.at("max_depth").get<int>();
        model.params.learning_rate = p.at("learning_rate").get<double>();
        model.params.min_leaf = p.at("min_leaf").get<int>();
        for (const json& nodes : j.at("trees")) {
            Tree tree;
            for (const json& n : nodes) {
                if (!n.is_array() || n.size() != 5) {
                    throw std::runtime_error("model file: malformed tree node");
                }
                TreeNode node;
                node.feature = n[0].get<int>();
                node.threshold = n[1].get<double>();
                node.left = n[2].get<int>();
                node.right = n[3].get<int>();
                node.leaf_value = n[4].get<double>();
                const int count = static_cast<int>(nodes.size());
                if (!node.is_leaf() &&
                    (node.left < 0 || node.left >= count || node.right < 0 ||
                     node.right >= count ||
                     node.feature >= static_cast<int>(model.feature_names.size()))) {
                    throw std::runtime_error("model file: tree node out of range");
                }
                tree.nodes.push_back(node);
            }
            if (tree.nodes.empty()) throw std::runtime_error("model file: empty tree");
            model.trees.push_back(std::move(tree));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model file: ") + e.what());
    }
    return model;
}

LinearModel parse_linear_model(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("model file: ") + e.what());
    }
    check_header(j, "linear");
    LinearModel model;
    try {
        model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        auto weights = j.at("weights").get<std::vector<double>>();
        if (weights.size() != model.feature_names.size()) {
            throw std::runtime_error("model file: weight count does not match manifest");
        }
        model.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                          static_cast<Eigen::Index>(weights.size()));
        model.intercept = j.at("intercept").get<double>();
        model.degenerate_design = j.value("degenerate_design", false);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model file: ") + e.what());
    }
    return model;
}

std::string model_type_of(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("model file: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        throw std::runtime_error("model file: missing type");
    }
    return j["type"].get<std::string>();
}

namespace {

double selection_score(const GBDTModel& model, const std::vector<EvalView>& eval_views,
                       bool pooled) {
    if (pooled) {
        std::vector<double> predictions, targets;
        for (const auto& view : eval_views) {
            ImageBuffer predicted = predict(model, *view.maps);
            const ImageBuffer& target = *view.target;
            for (std::size_t i = 0; i < predicted.data.size(); ++i) {
                if (view.mask != nullptr && view.mask->data[i] == 0.0) continue;
                predictions.push_back(predicted.data[i]);
                targets.push_back(target.data[i]);
            }
        }
        if (predictions.size() < 2) return 0.0;
        return pearson(predictions, targets).value_or(0.0);
    }
    double total = 0.0;
    for (const auto& view : eval_views) {
        ImageBuffer predicted = predict(model, *view.maps);
        total += pearson(predicted, *view.target, view.mask).value_or(0.0);
    }
    return total / static_cast<double>(eval_views.size());
}

} // namespace

SelectionTrace backward_selection(const PixelDataset& train,
                                  const std::vector<EvalView>& eval_views,
                                  const GbdtParams& params, bool pooled) {
    train.validate();
    if (eval_views.empty()) throw std::invalid_argument("backward_selection: no eval views");
    for (const auto& view : eval_views) {
        if (view.maps == nullptr || view.target == nullptr) {
            throw std::invalid_argument("backward_selection: null eval view inputs");
        }
    }

    SelectionTrace trace;
    std::vector<std::string> current = train.feature_names;
    int step = 1;
    while (current.size() > 1) {
        std::vector<double> scores(current.size(),
                                   -std::numeric_limits<double>::infinity());
        parallel_for(current.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t c = begin; c < end; ++c) {
                std::vector<std::string> names;
                names.reserve(current.size() - 1);
                for (std::size_t i = 0; i < current.size(); ++i) {
                    if (i != c) names.push_back(current[i]);
                }
                GBDTModel model = fit_gbdt(train.subset(names), params);
                scores[c] = selection_score(model, eval_views, pooled);
            }
        });
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.size(); ++c) {
            if (scores[c] > scores[best]) best = c; // ties keep the earlier feature
        }
        SelectionStep record;
        record.dropped = current[best];
        record.score = scores[best];
        for (std::size_t i = 0; i < current.size(); ++i) {
            if (i != best) record.surviving.push_back(current[i]);
        }
        trace.steps_survived[record.dropped] = step;
        current = record.surviving;
        trace.steps.push_back(std::move(record));
        ++step;
    }
    trace.steps_survived[current.front()] = static_cast<int>(trace.steps.size());
    return trace;
}

} // namespace uegs
