#include "absorbkit/splitting.hpp"

#include <algorithm>
#include <map>

#include "absorbkit/rng.hpp"

namespace absorbkit {

FoldPlan make_folds(const std::vector<SampleMeta>& meta, const IntVector& labels, int k,
                    std::uint64_t seed) {
    if (k < 2) throw ConfigError("BadK", "need at least 2 folds, got " + std::to_string(k));
    if (static_cast<Index>(meta.size()) != labels.size()) {
        throw DataError("RowMetaMismatch", "labels and metadata length differ");
    }
    if (meta.empty()) throw DataError("EmptyDataset", "no samples to fold");

    int n_pos = 0, n_neg = 0;
    for (Index i = 0; i < labels.size(); ++i) {
        if (labels(i) == 1) ++n_pos;
        else if (labels(i) == 0) ++n_neg;
        else throw DataError("BadLabel", "labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) throw DataError("SingleClass", "both classes must be present");

    // sorted map: deterministic subject order regardless of row order
    std::map<std::string, std::vector<Index>> by_subject;
    for (std::size_t i = 0; i < meta.size(); ++i) {
        by_subject[meta[i].subject_id].push_back(static_cast<Index>(i));
    }
    if (static_cast<int>(by_subject.size()) < k) {
        throw DataError("TooFewSubjects", std::to_string(by_subject.size()) +
                                              " subjects cannot fill " + std::to_string(k) +
                                              " folds");
    }

    // majority-class stratum per subject, ties toward class 1
    std::vector<std::string> stratum_pos, stratum_neg;
    for (const auto& [subject, rows] : by_subject) {
        int pos = 0;
        for (Index r : rows) pos += (labels(r) == 1) ? 1 : 0;
        const int neg = static_cast<int>(rows.size()) - pos;
        (pos >= neg ? stratum_pos : stratum_neg).push_back(subject);
    }

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.resize(static_cast<std::size_t>(k));

    const std::size_t minority =
        std::min(stratum_pos.size(), stratum_neg.size());
    if (minority < static_cast<std::size_t>(k)) {
        plan.warnings.push_back("minority class has " + std::to_string(minority) +
                                " subjects for " + std::to_string(k) +
                                " folds; some validation folds will miss a class");
    }

    std::map<std::string, int> fold_of;
    int cursor = 0;
    int stratum_id = 0;
    for (auto* stratum : {&stratum_pos, &stratum_neg}) {
        Rng rng = derive_rng(seed, "folds/stratum", static_cast<std::uint64_t>(stratum_id++));
        rng.shuffle(*stratum);
        for (const auto& subject : *stratum) {
            fold_of[subject] = cursor % k;
            ++cursor;
        }
    }

    for (std::size_t i = 0; i < meta.size(); ++i) {
        const int f = fold_of[meta[i].subject_id];
        for (int g = 0; g < k; ++g) {
            auto& fold = plan.folds[static_cast<std::size_t>(g)];
            (g == f ? fold.val_idx : fold.train_idx).push_back(static_cast<Index>(i));
        }
    }
    return plan;
}

nlohmann::json fold_plan_to_json(const FoldPlan& plan) {
    nlohmann::json j;
    j["k"] = plan.k;
    j["seed"] = plan.seed;
    j["warnings"] = plan.warnings;
    j["folds"] = nlohmann::json::array();
    for (const auto& fold : plan.folds) {
        nlohmann::json f;
        f["train_idx"] = fold.train_idx;
        f["val_idx"] = fold.val_idx;
        j["folds"].push_back(std::move(f));
    }
    return j;
}

}  // namespace absorbkit
