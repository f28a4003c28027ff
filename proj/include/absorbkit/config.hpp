#ifndef ABSORBKIT_CONFIG_HPP
#define ABSORBKIT_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "absorbkit/augmentation.hpp"
#include "absorbkit/common.hpp"
#include "absorbkit/ensemble.hpp"
#include "absorbkit/feature_selection.hpp"
#include "absorbkit/models.hpp"

#include "json.hpp"

namespace absorbkit {

/// TOML subset good enough for run configs: [table] / [a.b] headers,
/// `key = value` with strings, integers, floats (inf allowed), booleans
/// and single-type arrays (may span lines), and # comments. No inline
/// tables, datetimes or arrays-of-tables.
nlohmann::json parse_toml(const std::string& text);

/// Dispatch on extension: .toml or .json.
nlohmann::json load_config_file(const std::string& path);

struct PipelinePaths {
    std::string group_csv;
    std::string case_csv;
    std::string covariates_csv;  // optional unless residualize is on
    std::string out_dir;
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    int k = 5;
    int ensemble_top_l = 3;
    SelectionConfig selection;
    AugmentConfig augment;
    ModelSpec models;  // family field is ignored; one spec per family is derived
    std::vector<std::string> contrasts;              // empty = every default contrast
    int permutation_iterations = 1000;
    std::vector<std::string> permutation_contrasts;  // empty = all requested contrasts
    bool full_null = false;   // permutation nulls redo selection + balancing
    bool residualize = false;
    bool grid_search = false;
    SelectionMetric selection_metric = SelectionMetric::Kappa;
    int importance_repeats = 10;
    int threads = 0;  // 0 = hardware concurrency
    bool persist_fold_models = false;  // final-ensemble members are always written
    PipelinePaths paths;

    void validate() const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);

/// Synthetic cohort shape. Group subjects contribute `runs_per_condition`
/// runs of each condition; the case cohort is one extra subject with 27
/// meditation runs (split over J1..J6) and 16 runs of each control task.
/// Informative ROIs gain effect_size * SD on meditative rows; subjects
/// carry random intercepts so rows within a subject correlate by rho.
struct GeneratorSpec {
    int n_subjects = 20;
    int runs_per_condition = 2;
    int n_rois = 498;
    std::vector<int> informative_rois;  // empty = none (pure null cohort)
    double effect_size = 1.5;
    double within_subject_rho = 0.2;
    std::uint64_t seed = 42;
    bool include_case = true;
    std::vector<int> case_j_runs = {5, 5, 5, 4, 4, 4};  // J1..J6
    int case_control_runs = 16;

    void validate() const;
};

GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
nlohmann::json generator_spec_to_json(const GeneratorSpec& spec);

}  // namespace absorbkit

#endif
