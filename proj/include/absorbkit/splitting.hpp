#ifndef ABSORBKIT_SPLITTING_HPP
#define ABSORBKIT_SPLITTING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "absorbkit/common.hpp"
#include "absorbkit/data_model.hpp"

#include "json.hpp"

namespace absorbkit {

struct Fold {
    std::vector<Index> train_idx;
    std::vector<Index> val_idx;
};

/// Subject-wise stratified fold assignment. No subject ever appears in both
/// sides of one fold, and every sample lands in exactly one validation set.
struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<Fold> folds;
    std::vector<std::string> warnings;
};

/// Build K folds: subjects (sorted lexicographically) are each assigned a
/// majority-class stratum (ties toward class 1), shuffled within strata by
/// a seed-derived stream, then dealt round-robin to folds with a cursor
/// that continues across strata so fold sizes stay even. All of a
/// subject's samples follow its fold. K larger than the minority-class
/// subject count still builds a plan but records a warning, since some
/// validation folds must then miss a class.
FoldPlan make_folds(const std::vector<SampleMeta>& meta, const IntVector& labels, int k,
                    std::uint64_t seed);

nlohmann::json fold_plan_to_json(const FoldPlan& plan);

}  // namespace absorbkit

#endif
