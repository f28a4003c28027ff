#ifndef ABSORBKIT_DATA_MODEL_HPP
#define ABSORBKIT_DATA_MODEL_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "absorbkit/common.hpp"

namespace absorbkit {

enum class Atlas { Cortical, Subcortical, Brainstem, Cerebellar };

std::string atlas_name(Atlas a);

struct RoiEntry {
    int roi_id = 0;  // 1..498
    std::string name;
    Atlas atlas = Atlas::Cortical;
    std::string network_tag;  // optional
};

/// The 498-region parcellation registry: 400 cortical + 32 subcortical +
/// 54 brainstem + 10 cerebellar parcels with unique contiguous ids.
class RoiRegistry {
public:
    static constexpr int kCortical = 400;
    static constexpr int kSubcortical = 32;
    static constexpr int kBrainstem = 56;
    static constexpr int kCerebellar = 10;
    static constexpr int kTotal = 498;

    explicit RoiRegistry(std::vector<RoiEntry> entries);

    const std::vector<RoiEntry>& entries() const { return entries_; }
    const RoiEntry& entry(int roi_id) const;
    bool contains(int roi_id) const { return roi_id >= 1 && roi_id <= static_cast<int>(entries_.size()); }
    int size() const { return static_cast<int>(entries_.size()); }
    int count(Atlas a) const;

private:
    std::vector<RoiEntry> entries_;  // index i holds roi_id i+1
};

/// Registry with synthetic placeholder names keyed by atlas + index; real
/// atlas label tables can be loaded instead when available.
RoiRegistry make_default_registry();

enum class Cohort { Group, Case };

enum class Condition {
    J1, J2, J3, J4, J5, J6, J7, J8,
    Access, Afterglow, Counting, Memory,
};

std::string condition_name(Condition c);
Condition parse_condition(const std::string& s);
bool is_meditative(Condition c);  // J1..J8

struct SampleMeta {
    std::string sample_id;
    std::string subject_id;
    Cohort cohort = Cohort::Group;
    Condition condition = Condition::J1;
    int run_id = 1;
    std::string segment_key;  // subject_id x condition

    static std::string make_segment_key(const std::string& subject, Condition c) {
        return subject + "|" + condition_name(c);
    }
};

/// Immutable feature table: rows are fMRI segment-samples, columns are ROI
/// ReHo values. feature_ids holds the roi_id of each column.
struct Dataset {
    Matrix features;                // n_samples x n_features
    std::vector<SampleMeta> meta;   // aligned to rows
    std::vector<int> feature_ids;   // aligned to columns

    Index n_samples() const { return features.rows(); }
    Index n_features() const { return features.cols(); }
    void validate(const RoiRegistry& registry) const;
};

/// A binary comparison: rows whose condition is in `positive` get label 1,
/// rows in `negative` get label 0. Sides must be disjoint and non-empty.
class Contrast {
public:
    Contrast(std::string name, std::set<Condition> positive, std::set<Condition> negative);

    const std::string& name() const { return name_; }
    const std::set<Condition>& positive() const { return positive_; }
    const std::set<Condition>& negative() const { return negative_; }
    /// Name mangled for filesystem use (spaces -> '_').
    std::string dir_name() const;

private:
    std::string name_;
    std::set<Condition> positive_;
    std::set<Condition> negative_;
};

/// The 20 default comparisons: ACAM-J vs Control, ACAM-J vs Counting,
/// J1..J6 vs Counting, J1..J6 vs Memory, the five successive J pairs, and
/// J1 vs J6.
std::vector<Contrast> default_contrasts();

/// Rows whose condition is on either side of the contrast, original order
/// preserved, plus 0/1 labels.
struct ContrastSelection {
    Dataset data;
    IntVector labels;
};
ContrastSelection select_contrast(const Dataset& ds, const Contrast& c);

/// Parse the feature CSV (schema: sample_id,subject_id,cohort,condition,
/// run_id,roi_XXXX,...). Rejects missing columns, duplicate sample ids,
/// non-numeric feature values and roi columns not in the registry.
Dataset load_feature_table(const std::string& path, const RoiRegistry& registry);

void save_feature_table(const std::string& path, const Dataset& ds);

/// Covariate CSV (sample_id,<name>,...), returned in dataset row order.
/// Every dataset sample must be present in the file.
struct CovariateTable {
    std::vector<std::string> names;
    Matrix values;  // n_samples x n_covariates, aligned to `ds` rows
};
CovariateTable load_covariates(const std::string& path, const Dataset& ds);

void save_covariates(const std::string& path, const Dataset& ds, const CovariateTable& cov);

}  // namespace absorbkit

#endif
