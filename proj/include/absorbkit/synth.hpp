#ifndef ABSORBKIT_SYNTH_HPP
#define ABSORBKIT_SYNTH_HPP

#include "absorbkit/config.hpp"
#include "absorbkit/data_model.hpp"

namespace absorbkit {

/// Generated stand-in for the two-cohort study. Covariate tables carry
/// stability and width for every row, quality and intensity for meditative
/// rows (zero otherwise) and a meditative indicator column.
struct SyntheticCohort {
    Dataset group;
    Dataset case_study;  // zero rows when spec.include_case is false
    CovariateTable group_covariates;
    CovariateTable case_covariates;
};

/// Features are unit-variance normals with per-subject random intercepts
/// (variance share = within_subject_rho); informative ROIs gain
/// effect_size * SD on meditative rows. Group subjects contribute
/// runs_per_condition runs of each of J1..J6, counting and memory; the
/// case cohort is one held-out subject shaped like the source study:
/// 27 meditation runs plus 16 runs of each control task.
SyntheticCohort generate_synthetic(const GeneratorSpec& spec);

/// One covariate CSV covering both cohorts, group rows first. The pipeline
/// looks covariates up by sample_id, so a single file serves both datasets.
void save_cohort_covariates(const std::string& path, const SyntheticCohort& cohort);

}  // namespace absorbkit

#endif
