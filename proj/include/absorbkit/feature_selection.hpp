#ifndef ABSORBKIT_FEATURE_SELECTION_HPP
#define ABSORBKIT_FEATURE_SELECTION_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "absorbkit/common.hpp"
#include "absorbkit/models.hpp"

#include "json.hpp"

namespace absorbkit {

enum class ConsensusPolicy { Union, Majority, Intersection };

std::string policy_name(ConsensusPolicy p);
ConsensusPolicy parse_policy(const std::string& name);

struct SelectionConfig {
    double prekeep_fraction = 0.50;
    double rfe_step_fraction = 0.05;
    int rfe_min_features = 10;
    double rfe_delta = 0.01;  // allowed drop below the best validation score; inf disables
    int mi_bins = 10;
    // alternative elimination rule: drop features whose importance falls below
    // rfe_importance_threshold of the per-iteration maximum
    bool rfe_threshold_mode = false;
    double rfe_importance_threshold = 0.5;
    ConsensusPolicy consensus_policy = ConsensusPolicy::Majority;
    std::vector<int> prior_roi_mask;  // optional roi_id allowlist applied before ranking

    void validate() const;  // ConfigError on out-of-range values
};

struct RfeTracePoint {
    Index n_features = 0;
    double val_score = 0.0;
};

struct SelectionResult {
    Vector consensus_rank;  // per input column; NaN for columns excluded by the prior mask
    std::vector<Index> prekeep_set;         // column indices, ascending
    std::vector<RfeTracePoint> rfe_trace;
    std::vector<Index> selected;            // F_best column indices, ascending
    std::vector<std::string> warnings;
};

/// Plug-in mutual information (nats) between an equal-frequency-binned
/// column and binary labels. Tied values always share a bin, so a constant
/// column scores exactly 0.
double mutual_information(const Eigen::Ref<const Vector>& x, const IntVector& y, int bins);

/// Equal-weight average of three per-view percentile ranks (forest impurity
/// importance, |logistic coefficients| on standardized columns, mutual
/// information), where rank 0 is most important and ties share their average
/// rank. The ranking forest tries every feature at each split so the result
/// is column-permutation equivariant.
Vector rank_multiview(const Eigen::Ref<const Matrix>& x, const IntVector& y,
                      const ModelSpec& models, const SelectionConfig& cfg);

/// Keeps the ceil(fraction * d) lowest-rank columns; ties at the cut go to
/// the lower roi_id. roi_ids may be empty (columns tagged 1..d). Returns
/// column indices in ascending order.
std::vector<Index> prekeep(const Vector& consensus_rank, double fraction,
                           const std::vector<int>& roi_ids = {});

/// Scores one candidate feature set: returns the validation score and the
/// per-column importances (parallel to the given set).
using RfeEvaluator =
    std::function<std::pair<double, Vector>(const std::vector<Index>& current)>;

/// Recursive feature elimination with a degradation guard: stop as soon as
/// the validation score drops more than rfe_delta below the best seen, and
/// return the set that achieved the best score. Exposed with an injectable
/// evaluator so the guard logic is testable against a frozen score trace.
SelectionResult rfe_with_guard(const std::vector<Index>& start_set,
                               const std::vector<int>& roi_ids, const SelectionConfig& cfg,
                               const RfeEvaluator& evaluate);

/// Production evaluator: fits a random forest on the training slice of the
/// candidate set and scores Cohen's kappa on the untouched validation rows.
SelectionResult rfe_with_guard(const Eigen::Ref<const Matrix>& x_train, const IntVector& y_train,
                               const Eigen::Ref<const Matrix>& x_val, const IntVector& y_val,
                               const std::vector<Index>& start_set,
                               const std::vector<int>& roi_ids, const ModelSpec& models,
                               const SelectionConfig& cfg);

/// Full per-fold selection: prior mask, multi-view consensus ranking,
/// pre-keep, then guarded RFE.
SelectionResult select_features(const Eigen::Ref<const Matrix>& x_train, const IntVector& y_train,
                                const Eigen::Ref<const Matrix>& x_val, const IntVector& y_val,
                                const std::vector<int>& roi_ids, const ModelSpec& models,
                                const SelectionConfig& cfg);

struct ConsensusResult {
    std::vector<int> selected;  // ascending
    std::vector<std::string> warnings;
};

/// Combine per-fold selected id sets. Majority keeps ids chosen in more than
/// half the folds; an empty intersection falls back to majority with a
/// warning.
ConsensusResult consensus_global(const std::vector<std::vector<int>>& per_fold_sets,
                                 ConsensusPolicy policy);

nlohmann::json selection_to_json(const SelectionResult& result, const std::vector<int>& roi_ids);

}  // namespace absorbkit

#endif
