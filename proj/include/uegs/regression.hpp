#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uegs/representations.hpp"
#include "uegs/types.hpp"

namespace uegs {

/// Flattened per-pixel (features, target) pairs.
struct PixelDataset {
    std::vector<std::string> feature_names;
    std::vector<double> features; // row-major, rows() x feature count
    std::vector<double> targets;
    std::vector<std::pair<std::string, std::uint32_t>> provenance; // (view id, pixel)

    std::size_t rows() const { return targets.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    double feature(std::size_t row, std::size_t f) const {
        return features[row * n_features() + f];
    }
    /// New dataset keeping only the named feature columns, in the given order.
    PixelDataset subset(const std::vector<std::string>& names) const;
    void validate() const;
};

/// One training view's inputs for dataset assembly; mask nonzero = included.
struct ViewSample {
    std::string view_id;
    const FeatureMapSet* maps = nullptr;
    const ImageBuffer* target = nullptr; // 1 channel
    const ImageBuffer* mask = nullptr;   // optional
};

/// One row per unmasked pixel; rows from multiple views concatenated in view
/// order. Throws when the result is empty.
PixelDataset assemble_dataset(const std::vector<ViewSample>& views);

struct LinearModel {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    std::vector<std::string> feature_names;
    bool degenerate_design = false; // rank-deficient normal equations, solved via ridge

    double predict_row(const double* x) const;
};

/// Ordinary least squares with intercept, ridge 1e-8 on the normal equations.
LinearModel fit_linear(const PixelDataset& ds);

struct GbdtParams {
    int n_trees = 200;
    int max_depth = 3;
    double learning_rate = 0.1;
    int min_leaf = 20;
};

struct TreeNode {
    int feature = -1; // -1 => leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double leaf_value = 0.0; // mean residual; learning rate applied at prediction

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // node 0 is the root

    double evaluate(const double* x) const;
};

struct GBDTModel {
    double base_score = 0.0;
    GbdtParams params;
    std::vector<Tree> trees;
    std::vector<std::string> feature_names;

    double predict_row(const double* x) const;
};

/// Squared-error gradient boosting with exact greedy split search over sorted
/// unique feature values (threshold = midpoint, ties broken by lowest feature
/// index then lowest threshold). Deterministic and invariant to row order.
/// mse_history, when given, receives the training MSE after each round.
GBDTModel fit_gbdt(const PixelDataset& ds, const GbdtParams& params = {},
                   std::vector<double>* mse_history = nullptr);

/// Per-pixel model evaluation over a feature map set. Every model feature
/// must be present in the map manifest; extra channels are ignored.
ImageBuffer predict(const GBDTModel& model, const FeatureMapSet& maps);
ImageBuffer predict(const LinearModel& model, const FeatureMapSet& maps);

/// Fitted values on the dataset's own rows.
std::vector<double> predict_rows(const GBDTModel& model, const PixelDataset& ds);
std::vector<double> predict_rows(const LinearModel& model, const PixelDataset& ds);

// Model files: versioned JSON, bit-exact round trip.
std::string serialize_model(const GBDTModel& model);
std::string serialize_model(const LinearModel& model);
GBDTModel parse_gbdt_model(const std::string& text);
LinearModel parse_linear_model(const std::string& text);
/// "gbdt" or "linear".
std::string model_type_of(const std::string& text);

struct SelectionStep {
    std::string dropped;
    std::vector<std::string> surviving;
    double score; // evaluation Pearson of the best remaining set
};

struct SelectionTrace {
    std::vector<SelectionStep> steps;             // feature count - 1 entries
    std::map<std::string, int> steps_survived;    // steps a feature participated in
};

struct EvalView {
    const FeatureMapSet* maps = nullptr;
    const ImageBuffer* target = nullptr;
    const ImageBuffer* mask = nullptr;
};

/// Step-wise backward elimination: at each step refit without each candidate
/// feature, score on the eval views (mean per-view Pearson by default,
/// pooled-pixel Pearson when pooled is set; undefined correlations score 0),
/// and drop the feature whose removal hurts least. Ties break toward the
/// earliest manifest index.
SelectionTrace backward_selection(const PixelDataset& train,
                                  const std::vector<EvalView>& eval_views,
                                  const GbdtParams& params = {}, bool pooled = false);

} // namespace uegs
