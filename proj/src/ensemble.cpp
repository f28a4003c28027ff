#include "absorbkit/ensemble.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "absorbkit/metrics.hpp"
#include "absorbkit/rng.hpp"

namespace absorbkit {

std::string selection_metric_name(SelectionMetric m) {
    return m == SelectionMetric::Kappa ? "kappa" : "accuracy";
}

SelectionMetric parse_selection_metric(const std::string& name) {
    if (name == "kappa") return SelectionMetric::Kappa;
    if (name == "accuracy") return SelectionMetric::Accuracy;
    throw ConfigError("UnknownMetric", "no selection metric named '" + name + "'");
}

std::vector<CandidateScore> score_candidates(const std::vector<TrainedModel>& candidates,
                                             const Eigen::Ref<const Matrix>& x_val,
                                             const IntVector& y_val) {
    std::vector<CandidateScore> scores;
    scores.reserve(candidates.size());
    for (const auto& model : candidates) {
        const Vector probs = model.predict_proba(x_val);
        IntVector pred(probs.size());
        for (Index i = 0; i < probs.size(); ++i) pred(i) = probs(i) >= 0.5 ? 1 : 0;
        const Confusion c = confusion_from(y_val, pred);

        CandidateScore s;
        s.family = model.family();
        s.kappa = kappa_score(c);
        s.auc = auc_score(y_val, probs);
        s.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.n());
        scores.push_back(std::move(s));
    }
    return scores;
}

namespace {

std::size_t family_order(ModelFamily f) {
    for (std::size_t i = 0; i < kAllFamilies.size(); ++i) {
        if (kAllFamilies[i] == f) return i;
    }
    return kAllFamilies.size();
}

}  // namespace

std::vector<std::size_t> rank_candidates(const std::vector<CandidateScore>& scores,
                                         SelectionMetric metric) {
    const double worst = -std::numeric_limits<double>::infinity();
    auto primary = [&](const CandidateScore& s) {
        const auto& v = metric == SelectionMetric::Kappa ? s.kappa : s.accuracy;
        return v.value_or(worst);
    };
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double pa = primary(scores[a]), pb = primary(scores[b]);
        if (pa != pb) return pa > pb;
        const double aa = scores[a].auc.value_or(worst), ab = scores[b].auc.value_or(worst);
        if (aa != ab) return aa > ab;
        return family_order(scores[a].family) < family_order(scores[b].family);
    });
    return order;
}

TopSelection select_top(const std::vector<TrainedModel>& candidates,
                        const Eigen::Ref<const Matrix>& x_val, const IntVector& y_val, int top_l,
                        SelectionMetric metric) {
    if (top_l < 1) throw ConfigError("BadTopL", "ensemble size must be at least 1");
    if (static_cast<int>(candidates.size()) < top_l) {
        throw DataError("TooFewCandidates",
                        "need at least " + std::to_string(top_l) + " candidates, have " +
                            std::to_string(candidates.size()));
    }
    const auto scores = score_candidates(candidates, x_val, y_val);
    const auto order = rank_candidates(scores, metric);

    TopSelection out;
    for (std::size_t i : order) out.ranking.push_back(scores[i]);
    for (int i = 0; i < top_l; ++i) out.members.push_back(candidates[order[static_cast<std::size_t>(i)]]);
    return out;
}

Ensemble make_ensemble(std::vector<TrainedModel> members) {
    if (members.empty()) throw DataError("EmptyEnsemble", "ensemble needs at least one member");
    for (const auto& m : members) {
        if (m.feature_ids() != members.front().feature_ids()) {
            throw DataError("MixedFeatureIds", "ensemble members disagree on feature columns");
        }
    }
    return Ensemble{std::move(members)};
}

EnsemblePrediction ensemble_predict(const Ensemble& e, const Eigen::Ref<const Matrix>& x) {
    if (e.members.empty()) throw DataError("EmptyEnsemble", "ensemble has no members");
    const Index n = x.rows();
    Matrix member_probs(n, static_cast<Index>(e.members.size()));
    for (std::size_t m = 0; m < e.members.size(); ++m) {
        member_probs.col(static_cast<Index>(m)) = e.members[m].predict_proba(x);
    }

    EnsemblePrediction out;
    out.probs.resize(n);
    out.labels.resize(n);
    std::vector<double> row(e.members.size());
    for (Index i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < row.size(); ++m) {
            row[m] = member_probs(i, static_cast<Index>(m));
        }
        std::sort(row.begin(), row.end());  // fixed summation order regardless of member order
        double total = 0.0;
        for (double p : row) total += p;
        out.probs(i) = total / static_cast<double>(row.size());
        out.labels(i) = out.probs(i) >= 0.5 ? 1 : 0;
    }
    return out;
}

IntVector permute_labels_within_subjects(const IntVector& labels,
                                         const std::vector<std::string>& subjects,
                                         std::uint64_t seed, const std::string& context,
                                         std::uint64_t iteration) {
    if (static_cast<Index>(subjects.size()) != labels.size()) {
        throw DataError("DimensionMismatch", "labels and subjects differ in length");
    }
    std::map<std::string, std::vector<Index>> blocks;
    for (Index i = 0; i < labels.size(); ++i) blocks[subjects[static_cast<std::size_t>(i)]].push_back(i);

    IntVector permuted = labels;
    for (const auto& [subject, rows] : blocks) {
        Rng rng = derive_rng(seed, "perm/" + context, iteration, hash_string(subject));
        std::vector<int> vals;
        vals.reserve(rows.size());
        for (Index r : rows) vals.push_back(labels(r));
        rng.shuffle(vals);
        for (std::size_t k = 0; k < rows.size(); ++k) permuted(rows[k]) = vals[k];
    }
    return permuted;
}

IntVector permute_labels_within_subjects(const IntVector& labels,
                                         const std::vector<std::string>& subjects,
                                         const std::vector<std::string>& blocks,
                                         std::uint64_t seed, const std::string& context,
                                         std::uint64_t iteration) {
    if (static_cast<Index>(subjects.size()) != labels.size() ||
        blocks.size() != subjects.size()) {
        throw DataError("DimensionMismatch", "labels, subjects and blocks differ in length");
    }
    std::map<std::string, std::vector<Index>> by_subject;
    for (Index i = 0; i < labels.size(); ++i) {
        by_subject[subjects[static_cast<std::size_t>(i)]].push_back(i);
    }

    IntVector permuted = labels;
    for (const auto& [subject, rows] : by_subject) {
        // the subject's blocks in first-appearance order, each label-pure
        std::vector<std::vector<Index>> block_rows;
        std::vector<int> block_labels;
        std::map<std::string, std::size_t> seen;
        for (Index r : rows) {
            const std::string& key = blocks[static_cast<std::size_t>(r)];
            const auto [it, inserted] = seen.emplace(key, block_rows.size());
            if (inserted) {
                block_rows.emplace_back();
                block_labels.push_back(labels(r));
            } else if (labels(r) != block_labels[it->second]) {
                throw DataError("MixedBlock", "block '" + key + "' has both labels");
            }
            block_rows[it->second].push_back(r);
        }
        Rng rng = derive_rng(seed, "perm/" + context, iteration, hash_string(subject));
        rng.shuffle(block_labels);
        for (std::size_t b = 0; b < block_rows.size(); ++b) {
            for (Index r : block_rows[b]) permuted(r) = block_labels[b];
        }
    }
    return permuted;
}

PermutationTest permutation_test(
    double observed, const IntVector& labels, const std::vector<std::string>& subjects,
    int iterations, std::uint64_t seed,
    const std::function<double(const IntVector& permuted, std::uint64_t iteration)>& null_stat,
    const std::string& context, const std::vector<std::string>& blocks) {
    if (iterations < 1) throw ConfigError("BadIterations", "need at least one permutation");

    PermutationTest result;
    result.observed = observed;
    result.nulls.reserve(static_cast<std::size_t>(iterations));
    long long at_least = 0;
    for (int it = 0; it < iterations; ++it) {
        const IntVector permuted =
            blocks.empty()
                ? permute_labels_within_subjects(labels, subjects, seed, context,
                                                 static_cast<std::uint64_t>(it))
                : permute_labels_within_subjects(labels, subjects, blocks, seed, context,
                                                 static_cast<std::uint64_t>(it));
        const double null_value = null_stat(permuted, static_cast<std::uint64_t>(it));
        result.nulls.push_back(null_value);
        at_least += null_value >= observed ? 1 : 0;
    }
    result.p_value =
        static_cast<double>(1 + at_least) / static_cast<double>(1 + iterations);
    return result;
}

}  // namespace absorbkit
