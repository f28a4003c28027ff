#ifndef ABSORBKIT_ENSEMBLE_HPP
#define ABSORBKIT_ENSEMBLE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "absorbkit/common.hpp"
#include "absorbkit/models.hpp"

namespace absorbkit {

enum class SelectionMetric { Kappa, Accuracy };

std::string selection_metric_name(SelectionMetric m);
SelectionMetric parse_selection_metric(const std::string& name);

struct CandidateScore {
    ModelFamily family = ModelFamily::LR;
    std::optional<double> kappa;
    std::optional<double> auc;
    std::optional<double> accuracy;
};

/// Validation scores per candidate, in candidate order.
std::vector<CandidateScore> score_candidates(const std::vector<TrainedModel>& candidates,
                                             const Eigen::Ref<const Matrix>& x_val,
                                             const IntVector& y_val);

/// Candidate indices best-first: primary metric descending, ties by AUC
/// descending, then by the fixed family order. Missing values rank last.
std::vector<std::size_t> rank_candidates(const std::vector<CandidateScore>& scores,
                                         SelectionMetric metric);

struct TopSelection {
    std::vector<TrainedModel> members;      // the top L, best first
    std::vector<CandidateScore> ranking;    // every candidate, best first
};

/// Pick the top L candidates by validation score.
TopSelection select_top(const std::vector<TrainedModel>& candidates,
                        const Eigen::Ref<const Matrix>& x_val, const IntVector& y_val,
                        int top_l = 3, SelectionMetric metric = SelectionMetric::Kappa);

/// Uniform-weight probability-averaging ensemble with the 0.5 label
/// threshold. Members must share identical feature_ids.
struct Ensemble {
    std::vector<TrainedModel> members;
};

Ensemble make_ensemble(std::vector<TrainedModel> members);

struct EnsemblePrediction {
    Vector probs;
    IntVector labels;
};

/// Row-wise arithmetic mean of member probabilities; the per-row summands
/// are accumulated in sorted value order, so the result is exactly
/// independent of member ordering.
EnsemblePrediction ensemble_predict(const Ensemble& e, const Eigen::Ref<const Matrix>& x);

/// One draw of the subject-blocked null: each subject's labels are shuffled
/// among that subject's own rows. Streams are keyed by (seed, context,
/// iteration, subject), so iterations are independent and order-free.
IntVector permute_labels_within_subjects(const IntVector& labels,
                                         const std::vector<std::string>& subjects,
                                         std::uint64_t seed, const std::string& context,
                                         std::uint64_t iteration);

/// Block-granular variant: rows sharing a block key (e.g. a segment) move
/// together, so labels stay constant inside every block. Each block must be
/// label-pure on input. Per-subject streams match the row-level overload.
IntVector permute_labels_within_subjects(const IntVector& labels,
                                         const std::vector<std::string>& subjects,
                                         const std::vector<std::string>& blocks,
                                         std::uint64_t seed, const std::string& context,
                                         std::uint64_t iteration);

struct PermutationTest {
    double observed = 0.0;
    std::vector<double> nulls;  // iteration order
    double p_value = 1.0;       // (1 + #{null >= observed}) / (1 + iterations)
};

/// Right-tailed permutation significance. null_stat receives the permuted
/// labels of iteration i and must return the null value of the observed
/// statistic; it must be deterministic given its arguments. Non-empty
/// `blocks` switches to the block-granular permutation.
PermutationTest permutation_test(
    double observed, const IntVector& labels, const std::vector<std::string>& subjects,
    int iterations, std::uint64_t seed,
    const std::function<double(const IntVector& permuted, std::uint64_t iteration)>& null_stat,
    const std::string& context = "null", const std::vector<std::string>& blocks = {});

}  // namespace absorbkit

#endif
