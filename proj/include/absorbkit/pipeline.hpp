#ifndef ABSORBKIT_PIPELINE_HPP
#define ABSORBKIT_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absorbkit/common.hpp"
#include "absorbkit/config.hpp"
#include "absorbkit/data_model.hpp"
#include "absorbkit/ensemble.hpp"
#include "absorbkit/feature_selection.hpp"
#include "absorbkit/importance.hpp"
#include "absorbkit/metrics.hpp"
#include "absorbkit/models.hpp"
#include "absorbkit/splitting.hpp"

#include "json.hpp"

namespace absorbkit {

/// Everything a run reads, loaded once up front. One covariate CSV keyed by
/// sample_id serves both cohorts.
struct PipelineInputs {
    Dataset group;
    Dataset case_study;
    std::optional<CovariateTable> group_covariates;
    std::optional<CovariateTable> case_covariates;
};

PipelineInputs load_pipeline_inputs(const PipelineConfig& cfg, const RoiRegistry& registry);

/// One contrast's working set: both cohorts sliced to the contrast rows,
/// plus covariate slices when this is the residualized variant of the run.
struct ContrastJob {
    Contrast contrast{"?", {Condition::J1}, {Condition::Counting}};
    ContrastSelection group;
    ContrastSelection case_study;
    bool residualized = false;
    std::optional<CovariateTable> group_covariates;  // aligned to group rows
    std::optional<CovariateTable> case_covariates;   // aligned to case rows

    /// Artifact directory leaf: the contrast's dir_name, "__resid"-suffixed
    /// for the residualized variant.
    std::string dir_name() const;
};

ContrastJob make_contrast_job(const Contrast& contrast, const PipelineInputs& inputs,
                              bool residualized);

/// One fold of the group-CV loop.
struct FoldArtifacts {
    SelectionResult selection;
    std::vector<int> selected_roi_ids;      // ascending
    std::vector<MetricsReport> family_val;  // kAllFamilies order, ensemble inputs
    std::vector<CandidateScore> ranking;    // every family, best first
    std::vector<ModelFamily> top_families;  // ensemble members, best first
    MetricsReport ensemble_val;             // validation rows, never augmented
};

struct CvArtifacts {
    FoldPlan plan;
    std::vector<FoldArtifacts> folds;
    ConsensusResult global;  // roi ids surviving cross-fold consensus
    std::vector<std::string> warnings;
};

/// The group-study CV loop: per fold, split by subject, rank + prekeep +
/// guarded RFE on the raw train/val rows, balance the selected train slice,
/// fit the six families, pick the fold ensemble, and score it on the
/// untouched validation rows. artifact_dir non-empty persists folds.json,
/// per-fold selection JSON, the augmented training CSVs and (behind
/// cfg.persist_fold_models) the fold ensemble members.
CvArtifacts run_group_cv(const PipelineConfig& cfg, const ContrastJob& job,
                         const std::string& artifact_dir = "");

/// Post-CV products kept for the permutation, importance and LORO phases.
struct FinalArtifacts {
    std::vector<int> global_roi_ids;          // the consensus feature set
    std::vector<TrainedModel> all_models;     // six refits on the balanced group
    std::vector<ModelFamily> final_families;  // ensemble members, best first
    Ensemble ensemble;
    Matrix x_bal;                     // balanced full-group matrix, global columns
    IntVector y_bal;
    std::vector<Index> bal_base_row;  // provenance into the contrast group rows
    Vector neutral_values;            // balanced-column means (LORO neutralization)
    Matrix x_case;                    // case rows, global columns, residualized when active
    MetricsReport case_test;          // the single held-out evaluation
    int excluded_family_count = 0;    // families with no defined CV-summary metric
    std::vector<std::string> warnings;
};

/// Consensus features -> balance the full group slice -> refit all six
/// families -> ensemble of the top families by CV-summary metric -> one
/// evaluation on the raw case rows. Throws DataError("CaseMissingFeatures")
/// when the case table lacks a selected column. artifact_dir non-empty
/// persists the final ensemble members and the full-group augmented CSV.
FinalArtifacts finalize_and_test(const PipelineConfig& cfg, const ContrastJob& job,
                                 const CvArtifacts& cv, const std::string& artifact_dir = "");

/// Null statistic of one permutation iteration: the case accuracy after the
/// group labels are replaced by `permuted`. Default mode maps the permuted
/// labels through the frozen balanced matrix's provenance and refits only
/// the final ensemble members; cfg.full_null reruns the whole contrast
/// pipeline (folds, selection, balancing, family choice) on the permuted
/// labels.
double permutation_null_stat(const PipelineConfig& cfg, const ContrastJob& job,
                             const FinalArtifacts& fin, const IntVector& permuted,
                             std::uint64_t iteration);

/// Subject-blocked right-tailed permutation test of the final case accuracy.
PermutationTest run_permutation(const PipelineConfig& cfg, const ContrastJob& job,
                                const FinalArtifacts& fin);

/// Three-view importance (final RF impurity, |final LR coefficients|,
/// ensemble permutation importance on the balanced group set), each 0-1
/// normalized then averaged, plus leave-one-region-out drop counts of the
/// six final models on the case rows. All vectors live in global-feature
/// column space, aligned to fin.global_roi_ids.
ImportanceMap compute_contrast_importance(const PipelineConfig& cfg, const ContrastJob& job,
                                          const FinalArtifacts& fin);

/// Scatter importance vectors over every roi id of the feature table
/// (columns roi_id, roi_name, atlas, view_forest, view_linear,
/// view_permutation, aggregated, loro_drop_count); rois outside the global
/// set get zeros.
void write_importance_csv(const std::string& path, const ImportanceMap& imp,
                          const std::vector<int>& global_roi_ids,
                          const std::vector<int>& all_roi_ids, const RoiRegistry& registry);

/// metrics_<contrast>.json payload: per-fold blocks, the CV summary
/// (mean/SD per metric over fold ensembles), the case test and the
/// permutation block when one ran.
nlohmann::json contrast_metrics_json(const ContrastJob& job, const CvArtifacts& cv,
                                     const FinalArtifacts& fin,
                                     const std::optional<PermutationTest>& perm);

struct RunManifest {
    nlohmann::json manifest;
    std::string path;  // <out_dir>/manifest.json
    bool all_ok = true;
    std::vector<std::string> failed;  // "<dir>: <error code>" per failed job
};

/// The whole protocol: load inputs, run every contrast (and its residualized
/// twin when cfg.residualize) through CV + finalization in a worker pool,
/// then the deferred permutation iterations, then the serial artifact
/// writes, summary.json, residual_vs_raw.json and manifest.json. The
/// manifest is written even when jobs fail; a failing job never stops the
/// others.
RunManifest run_all(const PipelineConfig& cfg);

}  // namespace absorbkit

#endif
