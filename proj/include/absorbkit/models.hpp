#ifndef ABSORBKIT_MODELS_HPP
#define ABSORBKIT_MODELS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "absorbkit/common.hpp"

#include "json.hpp"

namespace absorbkit {

enum class ModelFamily { LR, DT, RF, SVM_LINEAR, KNN, MLP };

/// Fixed family order; also the tie-break order in model selection.
inline constexpr std::array<ModelFamily, 6> kAllFamilies = {
    ModelFamily::LR,  ModelFamily::DT,  ModelFamily::RF,
    ModelFamily::SVM_LINEAR, ModelFamily::KNN, ModelFamily::MLP};

std::string family_name(ModelFamily f);
ModelFamily parse_family(const std::string& name);

struct LrHyper {
    double c = 1.0;        // L2 penalty strength is 1/(2C) * ||w||^2
    double tol = 1e-6;     // gradient infinity-norm
    int max_iter = 1000;
};
struct DtHyper {
    int max_depth = 10;
    int min_samples_split = 2;
};
struct RfHyper {
    int n_trees = 100;
    int max_depth = 20;
    int mtry = 0;  // features tried per split: 0 = floor(sqrt(d)), -1 = all
};
struct SvmHyper {
    double c = 1.0;
    double tol = 1e-8;     // max alpha change per sweep
    int max_iter = 1000;   // sweeps of dual coordinate descent
};
struct KnnHyper {
    int k = 5;
};
struct MlpHyper {
    int hidden1 = 128;
    int hidden2 = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int max_epochs = 100;
    int batch_size = 32;
    double val_fraction = 0.1;
    int patience = 10;
    bool early_stopping = true;
};

struct ModelSpec {
    ModelFamily family = ModelFamily::LR;
    std::uint64_t seed = 42;
    LrHyper lr;
    DtHyper dt;
    RfHyper rf;
    SvmHyper svm;
    KnnHyper knn;
    MlpHyper mlp;
};

/// Column-wise z-scoring fit on training rows only. Zero-variance columns
/// keep scale 1 so they map to 0 after centering.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Eigen::Ref<const Matrix>& x);
    Matrix transform(const Eigen::Ref<const Matrix>& x) const;
};

namespace detail {

struct LinearParams {
    Vector w;
    double b = 0.0;
    bool platt = false;  // SVM routes decision values through a fitted sigmoid
    double platt_a = 0.0;
    double platt_b = 0.0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double prob = 0.0;  // class-1 fraction at the node
};

struct TreeParams {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    Vector importances;  // per-feature gini decrease, weighted by node sample share
};

struct ForestParams {
    std::vector<TreeParams> trees;
};

struct KnnParams {
    Matrix x;
    IntVector y;
};

struct MlpShape {
    Index d = 0, h1 = 0, h2 = 0;
    Index n_params() const { return h1 * d + h1 + h2 * h1 + h2 + h2 + 1; }
};

struct MlpParams {
    MlpShape shape;
    Vector params;  // W1,b1,W2,b2,w3,b3 flattened in that order
    std::vector<double> best_losses;  // monitored loss at each accepted checkpoint
};

using FamilyParams =
    std::variant<LinearParams, TreeParams, ForestParams, KnnParams, MlpParams>;

/// Mean BCE of the 2-hidden-layer net (no regularizer), plus its gradient
/// when grad is non-null. Exposed for finite-difference checks.
double mlp_loss_and_grad(const MlpShape& shape, const Vector& params,
                         const Eigen::Ref<const Matrix>& x, const IntVector& y, Vector* grad);

}  // namespace detail

class TrainedModel {
public:
    TrainedModel() = default;

    ModelFamily family() const { return spec_.family; }
    const ModelSpec& spec() const { return spec_; }
    const std::vector<int>& feature_ids() const { return feature_ids_; }
    Index n_train() const { return n_train_; }
    const std::optional<Standardizer>& standardizer() const { return standardizer_; }
    const detail::FamilyParams& params() const { return params_; }

    /// P(class = 1) per row. Applies the stored standardizer when present.
    Vector predict_proba(const Eigen::Ref<const Matrix>& x) const;
    /// Hard labels: 1 iff probability >= 0.5.
    IntVector predict(const Eigen::Ref<const Matrix>& x) const;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);

    friend TrainedModel fit(const ModelSpec& spec, const Eigen::Ref<const Matrix>& x,
                            const IntVector& y, std::vector<int> feature_ids);

private:
    ModelSpec spec_;
    std::vector<int> feature_ids_;
    Index n_train_ = 0;
    std::optional<Standardizer> standardizer_;  // LR, SVM and MLP only
    detail::FamilyParams params_;
};

/// Train one family on (x, y). Both classes must be present and x finite.
/// LR, SVM and MLP standardize internally (fit on these rows only, frozen
/// into the model); DT, RF and KNN consume raw features. feature_ids may
/// be empty, in which case columns are tagged 1..d.
TrainedModel fit(const ModelSpec& spec, const Eigen::Ref<const Matrix>& x, const IntVector& y,
                 std::vector<int> feature_ids = {});

/// Accumulated gini-decrease importance per feature column. Tree models
/// report their learned values (forest = sum over trees in index order);
/// other families report all zeros.
Vector impurity_importances(const TrainedModel& model);

/// Weight vector of a linear model (LR or linear SVM), excluding the
/// intercept, in the model's own input scale (standardized for both).
/// Throws DataError("NotLinear") for any other family.
Vector linear_coefficients(const TrainedModel& model);

}  // namespace absorbkit

#endif
