#ifndef ABSORBKIT_AUGMENTATION_HPP
#define ABSORBKIT_AUGMENTATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "absorbkit/common.hpp"
#include "absorbkit/data_model.hpp"
#include "absorbkit/rng.hpp"

namespace absorbkit {

struct AugmentConfig {
    int target_runs_per_segment = 27;
    int k_cap = 5;
    double noise_level = 0.05;          // fraction of per-column SD
    double retention_degree = 0.5;      // blend weight on the unperturbed value
    double interpolation_proportion = 0.8;  // fraction of columns touched per row
    bool perturb_originals = false;

    void validate() const;
};

/// SMOTE synthetics for one class: row s uses base row s mod n, one of its
/// k nearest Euclidean in-class neighbors (distance ties broken by lower
/// index), and x_i + u*(x_nn - x_i) with u ~ Uniform[0,1).
Matrix smote_interpolate(const Eigen::Ref<const Matrix>& x_class, Index n_new, int k, Rng& rng);

/// Per row, exactly ceil(interpolation_proportion * d) columns (sampled
/// without replacement) receive x + (1 - retention_degree) * eps with
/// eps ~ Normal(0, (noise_level * sd_col)^2). col_sd must come from the
/// original, pre-synthetic segment rows.
Matrix perturb(const Eigen::Ref<const Matrix>& x, const Vector& col_sd, const AugmentConfig& cfg,
               Rng& rng);

struct BalancedSegment {
    Matrix rows;                 // target_runs_per_segment x d
    std::vector<int> run_ids;    // fresh 1..target
    std::vector<bool> synthetic;
    std::vector<Index> base_row;  // provenance into the input segment rows
    int k_used = 0;               // SMOTE neighbor count; 0 when fallback replication ran
    int trimmed_originals = 0;    // nonzero only when the segment exceeded the target
};

/// Bring one (subject, condition) segment to exactly the target run count.
/// Run ids are unique within a segment, so the whole segment acts as one
/// SMOTE class with k = min(k_cap, n-1); a single-row segment falls back to
/// replication plus noise. Synthetic rows are perturbed (originals too only
/// if cfg.perturb_originals), newest synthetics are trimmed first, and rows
/// are relabeled 1..target. Segments already above the target keep their
/// earliest rows (there are no synthetics to drop; the count is reported).
BalancedSegment balance_segment(const Eigen::Ref<const Matrix>& seg, const AugmentConfig& cfg,
                                Rng& rng);

struct BalancedTrainingSet {
    Matrix x;
    IntVector labels;
    std::vector<SampleMeta> meta;
    std::vector<bool> synthetic;
    std::vector<Index> base_row;  // provenance into the input training slice
};

/// Balance every segment of a training slice. Validation and case rows
/// must not be part of the inputs; the interface only ever sees the train
/// slice. RNG streams are keyed (seed, "augment/" + contrast, fold,
/// segment hash) so per-segment draws are schedule-independent.
BalancedTrainingSet balance_training_set(const Eigen::Ref<const Matrix>& x,
                                         const std::vector<SampleMeta>& meta,
                                         const IntVector& labels, const AugmentConfig& cfg,
                                         std::uint64_t seed, const std::string& contrast_name,
                                         int fold);

}  // namespace absorbkit

#endif
