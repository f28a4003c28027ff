#include "absorbkit/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "absorbkit/common.hpp"
#include "absorbkit/rng.hpp"

namespace absorbkit {

namespace {

const std::vector<Condition> kGroupConditions = {
    Condition::J1, Condition::J2, Condition::J3, Condition::J4,
    Condition::J5, Condition::J6, Condition::Counting, Condition::Memory};

const std::vector<std::string> kCovariateNames = {"stability", "width", "quality", "intensity",
                                                  "meditative"};

struct SubjectStreams {
    Vector intercept;  // per roi
    Rng rows;
    Rng cov;
};

SubjectStreams make_subject(const GeneratorSpec& spec, int subject_index) {
    Rng intercept_rng = derive_rng(spec.seed, "synth/intercept", subject_index);
    Vector intercept(spec.n_rois);
    const double subject_sd = std::sqrt(spec.within_subject_rho);
    for (Index r = 0; r < spec.n_rois; ++r) intercept(r) = subject_sd * intercept_rng.normal();
    return SubjectStreams{std::move(intercept), derive_rng(spec.seed, "synth/rows", subject_index),
                          derive_rng(spec.seed, "synth/cov", subject_index)};
}

void emit_row(const GeneratorSpec& spec, SubjectStreams& streams, const std::string& subject_id,
              Cohort cohort, Condition condition, int run_id, Dataset& ds, Index row,
              CovariateTable& cov) {
    const double noise_sd = std::sqrt(1.0 - spec.within_subject_rho);
    for (Index r = 0; r < spec.n_rois; ++r) {
        ds.features(row, r) = streams.intercept(r) + noise_sd * streams.rows.normal();
    }
    if (is_meditative(condition)) {
        for (int roi : spec.informative_rois) ds.features(row, roi - 1) += spec.effect_size;
    }

    SampleMeta meta;
    meta.subject_id = subject_id;
    meta.cohort = cohort;
    meta.condition = condition;
    meta.run_id = run_id;
    meta.sample_id = subject_id + "_" + condition_name(condition) + "_r" + std::to_string(run_id);
    meta.segment_key = SampleMeta::make_segment_key(subject_id, condition);
    ds.meta[static_cast<std::size_t>(row)] = std::move(meta);

    const double stability = streams.cov.uniform();
    const double width = streams.cov.uniform();
    const double quality = streams.cov.uniform();
    const double intensity = streams.cov.uniform();
    const bool meditative = is_meditative(condition);
    cov.values(row, 0) = stability;
    cov.values(row, 1) = width;
    cov.values(row, 2) = meditative ? quality : 0.0;
    cov.values(row, 3) = meditative ? intensity : 0.0;
    cov.values(row, 4) = meditative ? 1.0 : 0.0;
}

Dataset empty_dataset(const GeneratorSpec& spec, Index rows) {
    Dataset ds;
    ds.features.resize(rows, spec.n_rois);
    ds.meta.resize(static_cast<std::size_t>(rows));
    for (int r = 1; r <= spec.n_rois; ++r) ds.feature_ids.push_back(r);
    return ds;
}

CovariateTable empty_covariates(Index rows) {
    CovariateTable cov;
    cov.names = kCovariateNames;
    cov.values.resize(rows, static_cast<Index>(kCovariateNames.size()));
    return cov;
}

}  // namespace

SyntheticCohort generate_synthetic(const GeneratorSpec& spec) {
    spec.validate();

    SyntheticCohort out;
    const Index group_rows = static_cast<Index>(spec.n_subjects) *
                             static_cast<Index>(kGroupConditions.size()) * spec.runs_per_condition;
    out.group = empty_dataset(spec, group_rows);
    out.group_covariates = empty_covariates(group_rows);

    Index row = 0;
    for (int s = 0; s < spec.n_subjects; ++s) {
        char name[16];
        std::snprintf(name, sizeof(name), "sub%02d", s + 1);
        SubjectStreams streams = make_subject(spec, s);
        for (Condition c : kGroupConditions) {
            for (int run = 1; run <= spec.runs_per_condition; ++run) {
                emit_row(spec, streams, name, Cohort::Group, c, run, out.group, row,
                         out.group_covariates);
                ++row;
            }
        }
    }

    Index case_rows = 0;
    if (spec.include_case) {
        for (int r : spec.case_j_runs) case_rows += r;
        case_rows += 2 * spec.case_control_runs;
    }
    out.case_study = empty_dataset(spec, case_rows);
    out.case_covariates = empty_covariates(case_rows);

    if (spec.include_case) {
        SubjectStreams streams = make_subject(spec, spec.n_subjects);
        const std::vector<Condition> js = {Condition::J1, Condition::J2, Condition::J3,
                                           Condition::J4, Condition::J5, Condition::J6};
        row = 0;
        for (std::size_t i = 0; i < js.size(); ++i) {
            for (int run = 1; run <= spec.case_j_runs[i]; ++run) {
                emit_row(spec, streams, "case01", Cohort::Case, js[i], run, out.case_study, row,
                         out.case_covariates);
                ++row;
            }
        }
        for (Condition c : {Condition::Counting, Condition::Memory}) {
            for (int run = 1; run <= spec.case_control_runs; ++run) {
                emit_row(spec, streams, "case01", Cohort::Case, c, run, out.case_study, row,
                         out.case_covariates);
                ++row;
            }
        }
    }
    return out;
}

void save_cohort_covariates(const std::string& path, const SyntheticCohort& cohort) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("FileWriteError", "cannot write '" + path + "'");
    out << "sample_id";
    for (const auto& name : cohort.group_covariates.names) out << ',' << name;
    out << "\n";
    auto emit = [&out](const Dataset& ds, const CovariateTable& cov) {
        for (Index i = 0; i < ds.n_samples(); ++i) {
            out << ds.meta[static_cast<std::size_t>(i)].sample_id;
            for (Index j = 0; j < cov.values.cols(); ++j) {
                out << ',' << format_double(cov.values(i, j));
            }
            out << "\n";
        }
    };
    emit(cohort.group, cohort.group_covariates);
    emit(cohort.case_study, cohort.case_covariates);
    if (!out) throw DataError("FileWriteError", "short write to '" + path + "'");
}

}  // namespace absorbkit
