#include "absorbkit/feature_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "absorbkit/metrics.hpp"

namespace absorbkit {

std::string policy_name(ConsensusPolicy p) {
    switch (p) {
        case ConsensusPolicy::Union: return "union";
        case ConsensusPolicy::Majority: return "majority";
        case ConsensusPolicy::Intersection: return "intersection";
    }
    return "unknown";
}

ConsensusPolicy parse_policy(const std::string& name) {
    if (name == "union") return ConsensusPolicy::Union;
    if (name == "majority") return ConsensusPolicy::Majority;
    if (name == "intersection") return ConsensusPolicy::Intersection;
    throw ConfigError("UnknownPolicy", "no consensus policy named '" + name + "'");
}

void SelectionConfig::validate() const {
    if (!(prekeep_fraction > 0.0) || prekeep_fraction > 1.0) {
        throw ConfigError("BadFraction", "prekeep_fraction must be in (0, 1]");
    }
    if (!(rfe_step_fraction > 0.0) || rfe_step_fraction > 1.0) {
        throw ConfigError("BadFraction", "rfe_step_fraction must be in (0, 1]");
    }
    if (rfe_min_features < 1) {
        throw ConfigError("BadMinFeatures", "rfe_min_features must be at least 1");
    }
    if (std::isnan(rfe_delta) || rfe_delta < 0.0) {
        throw ConfigError("BadDelta", "rfe_delta must be non-negative");
    }
    if (mi_bins < 2) throw ConfigError("BadBins", "mi_bins must be at least 2");
    if (!(rfe_importance_threshold >= 0.0) || rfe_importance_threshold > 1.0) {
        throw ConfigError("BadThreshold", "rfe_importance_threshold must be in [0, 1]");
    }
}

double mutual_information(const Eigen::Ref<const Vector>& x, const IntVector& y, int bins) {
    const Index n = x.size();
    if (bins < 2) throw ConfigError("BadBins", "mi_bins must be at least 2");
    if (n != y.size()) throw DataError("DimensionMismatch", "column and labels differ in length");
    if (n < bins) {
        throw DataError("TooFewSamples", "need at least " + std::to_string(bins) +
                                             " samples for " + std::to_string(bins) + " bins");
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        return x(a) != x(b) ? x(a) < x(b) : a < b;
    });

    // equal-frequency bins by sorted position; a run of tied values shares
    // the bin of its first position, so a constant column lands in one bin
    std::vector<int> bin_of(static_cast<std::size_t>(n));
    for (Index i = 0; i < n;) {
        Index j = i;
        while (j < n && x(order[static_cast<std::size_t>(j)]) ==
                            x(order[static_cast<std::size_t>(i)])) {
            ++j;
        }
        const int b = static_cast<int>(i * static_cast<Index>(bins) / n);
        for (Index k = i; k < j; ++k) bin_of[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = b;
        i = j;
    }

    Matrix joint = Matrix::Zero(bins, 2);
    for (Index i = 0; i < n; ++i) {
        if (y(i) != 0 && y(i) != 1) throw DataError("BadLabel", "labels must be 0 or 1");
        joint(bin_of[static_cast<std::size_t>(i)], y(i)) += 1.0;
    }
    joint /= static_cast<double>(n);

    const Vector p_bin = joint.rowwise().sum();
    const Eigen::RowVector2d p_lab = joint.colwise().sum();
    double mi = 0.0;
    for (int b = 0; b < bins; ++b) {
        for (int l = 0; l < 2; ++l) {
            const double pj = joint(b, l);
            if (pj > 0.0) mi += pj * std::log(pj / (p_bin(b) * p_lab(l)));
        }
    }
    return std::max(0.0, mi);
}

namespace {

// percentile ranks in [0,1]: rank 0 = highest score, exact ties averaged
Vector descending_percentile_ranks(const Vector& scores) {
    const Index d = scores.size();
    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        return scores(a) != scores(b) ? scores(a) > scores(b) : a < b;
    });

    Vector ranks(d);
    for (Index i = 0; i < d;) {
        Index j = i;
        while (j < d && scores(order[static_cast<std::size_t>(j)]) ==
                            scores(order[static_cast<std::size_t>(i)])) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j - 1);
        for (Index k = i; k < j; ++k) ranks(order[static_cast<std::size_t>(k)]) = avg;
        i = j;
    }
    if (d > 1) ranks /= static_cast<double>(d - 1);
    return ranks;
}

Matrix gather_columns(const Eigen::Ref<const Matrix>& x, const std::vector<Index>& cols) {
    Matrix out(x.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.col(static_cast<Index>(c)) = x.col(cols[c]);
    }
    return out;
}

std::vector<int> default_ids(Index d) {
    std::vector<int> ids(static_cast<std::size_t>(d));
    std::iota(ids.begin(), ids.end(), 1);
    return ids;
}

}  // namespace

Vector rank_multiview(const Eigen::Ref<const Matrix>& x, const IntVector& y,
                      const ModelSpec& models, const SelectionConfig& cfg) {
    const Index d = x.cols();
    Vector rf_scores(d), lin_scores(d), mi_scores(d);
    try {
        ModelSpec rf_spec = models;
        rf_spec.family = ModelFamily::RF;
        rf_spec.rf.mtry = -1;  // all features per split: ranks must not depend on column order
        rf_scores = impurity_importances(fit(rf_spec, x, y));

        ModelSpec lr_spec = models;
        lr_spec.family = ModelFamily::LR;
        const auto lr = fit(lr_spec, x, y);
        lin_scores = std::get<detail::LinearParams>(lr.params()).w.cwiseAbs();

        for (Index c = 0; c < d; ++c) mi_scores(c) = mutual_information(x.col(c), y, cfg.mi_bins);
    } catch (const Error& e) {
        throw DataError("DegenerateFit", std::string("ranking view failed: ") + e.what());
    }

    return (descending_percentile_ranks(rf_scores) + descending_percentile_ranks(lin_scores) +
            descending_percentile_ranks(mi_scores)) /
           3.0;
}

std::vector<Index> prekeep(const Vector& consensus_rank, double fraction,
                           const std::vector<int>& roi_ids) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ConfigError("BadFraction", "prekeep fraction must be in (0, 1]");
    }
    const Index d = consensus_rank.size();
    const std::vector<int> ids = roi_ids.empty() ? default_ids(d) : roi_ids;
    if (static_cast<Index>(ids.size()) != d) {
        throw DataError("DimensionMismatch", "roi_ids length must match rank length");
    }

    std::vector<Index> candidates;
    for (Index c = 0; c < d; ++c) {
        if (std::isfinite(consensus_rank(c))) candidates.push_back(c);
    }
    const Index keep = std::min<Index>(static_cast<Index>(candidates.size()),
                                       ceil_fraction(fraction, static_cast<Index>(candidates.size())));
    std::sort(candidates.begin(), candidates.end(), [&](Index a, Index b) {
        if (consensus_rank(a) != consensus_rank(b)) return consensus_rank(a) < consensus_rank(b);
        return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
    });
    candidates.resize(static_cast<std::size_t>(keep));
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

SelectionResult rfe_with_guard(const std::vector<Index>& start_set,
                               const std::vector<int>& roi_ids, const SelectionConfig& cfg,
                               const RfeEvaluator& evaluate) {
    cfg.validate();
    if (start_set.empty()) throw DataError("EmptySelection", "rfe needs a non-empty start set");

    std::vector<Index> current = start_set;
    std::sort(current.begin(), current.end());
    current.erase(std::unique(current.begin(), current.end()), current.end());

    auto id_of = [&](Index col) {
        if (roi_ids.empty()) return static_cast<int>(col) + 1;
        if (col < 0 || static_cast<std::size_t>(col) >= roi_ids.size()) {
            throw DataError("DimensionMismatch", "column index outside roi_ids");
        }
        return roi_ids[static_cast<std::size_t>(col)];
    };

    SelectionResult result;
    double best_score = -std::numeric_limits<double>::infinity();

    while (true) {
        const auto [score, importances] = evaluate(current);
        if (importances.size() != static_cast<Index>(current.size())) {
            throw DataError("DimensionMismatch", "evaluator importances must match the set size");
        }
        result.rfe_trace.push_back({static_cast<Index>(current.size()), score});
        if (score < best_score - cfg.rfe_delta) break;  // degradation guard
        if (score > best_score) {
            best_score = score;
            result.selected = current;
        }
        if (static_cast<Index>(current.size()) <= cfg.rfe_min_features) break;

        // eliminate the least important features; equal importances keep the
        // lower roi_id in the running set
        std::vector<std::size_t> order(current.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (importances(static_cast<Index>(a)) != importances(static_cast<Index>(b))) {
                return importances(static_cast<Index>(a)) < importances(static_cast<Index>(b));
            }
            return id_of(current[a]) > id_of(current[b]);
        });

        const Index max_drop = static_cast<Index>(current.size()) - cfg.rfe_min_features;
        Index n_drop = 0;
        if (cfg.rfe_threshold_mode) {
            const double max_imp = importances.maxCoeff();
            if (max_imp <= 0.0) break;
            Index below = 0;
            for (Index i = 0; i < importances.size(); ++i) {
                below += importances(i) < cfg.rfe_importance_threshold * max_imp ? 1 : 0;
            }
            n_drop = std::min(below, max_drop);
        } else {
            n_drop = std::min(ceil_fraction(cfg.rfe_step_fraction,
                                            static_cast<Index>(current.size())),
                              max_drop);
        }
        if (n_drop <= 0) break;

        std::set<std::size_t> dropped(order.begin(), order.begin() + n_drop);
        std::vector<Index> next;
        for (std::size_t i = 0; i < current.size(); ++i) {
            if (!dropped.count(i)) next.push_back(current[i]);
        }
        current = std::move(next);
    }
    return result;
}

SelectionResult rfe_with_guard(const Eigen::Ref<const Matrix>& x_train, const IntVector& y_train,
                               const Eigen::Ref<const Matrix>& x_val, const IntVector& y_val,
                               const std::vector<Index>& start_set,
                               const std::vector<int>& roi_ids, const ModelSpec& models,
                               const SelectionConfig& cfg) {
    ModelSpec rf_spec = models;
    rf_spec.family = ModelFamily::RF;
    auto evaluate = [&](const std::vector<Index>& current) {
        const Matrix xt = gather_columns(x_train, current);
        const Matrix xv = gather_columns(x_val, current);
        const auto model = fit(rf_spec, xt, y_train);
        const auto kappa = kappa_score(confusion_from(y_val, model.predict(xv)));
        // an undefined kappa (degenerate validation confusion) rates worst
        return std::make_pair(kappa.value_or(-1.0), impurity_importances(model));
    };
    return rfe_with_guard(start_set, roi_ids, cfg, evaluate);
}

SelectionResult select_features(const Eigen::Ref<const Matrix>& x_train, const IntVector& y_train,
                                const Eigen::Ref<const Matrix>& x_val, const IntVector& y_val,
                                const std::vector<int>& roi_ids, const ModelSpec& models,
                                const SelectionConfig& cfg) {
    cfg.validate();
    const Index d = x_train.cols();
    if (x_val.cols() != d) {
        throw DataError("DimensionMismatch", "train and validation column counts differ");
    }
    const std::vector<int> ids = roi_ids.empty() ? default_ids(d) : roi_ids;
    if (static_cast<Index>(ids.size()) != d) {
        throw DataError("DimensionMismatch", "roi_ids length must match feature columns");
    }

    std::vector<Index> columns;
    if (cfg.prior_roi_mask.empty()) {
        columns.resize(static_cast<std::size_t>(d));
        std::iota(columns.begin(), columns.end(), 0);
    } else {
        const std::set<int> mask(cfg.prior_roi_mask.begin(), cfg.prior_roi_mask.end());
        std::set<int> seen;
        for (Index c = 0; c < d; ++c) {
            if (mask.count(ids[static_cast<std::size_t>(c)])) {
                columns.push_back(c);
                seen.insert(ids[static_cast<std::size_t>(c)]);
            }
        }
        for (int id : mask) {
            if (!seen.count(id)) {
                throw ConfigError("UnknownRoiId",
                                  "prior mask roi " + std::to_string(id) + " not in the data");
            }
        }
    }

    const Vector sub_ranks =
        rank_multiview(gather_columns(x_train, columns), y_train, models, cfg);

    SelectionResult result;
    result.consensus_rank =
        Vector::Constant(d, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < columns.size(); ++i) {
        result.consensus_rank(columns[i]) = sub_ranks(static_cast<Index>(i));
    }

    result.prekeep_set = prekeep(result.consensus_rank, cfg.prekeep_fraction, ids);
    auto rfe = rfe_with_guard(x_train, y_train, x_val, y_val, result.prekeep_set, ids, models,
                              cfg);
    result.rfe_trace = std::move(rfe.rfe_trace);
    result.selected = std::move(rfe.selected);
    result.warnings = std::move(rfe.warnings);
    return result;
}

ConsensusResult consensus_global(const std::vector<std::vector<int>>& per_fold_sets,
                                 ConsensusPolicy policy) {
    if (per_fold_sets.empty()) {
        throw DataError("EmptyInput", "consensus needs at least one fold set");
    }
    std::map<int, int> counts;
    for (const auto& fold : per_fold_sets) {
        const std::set<int> unique(fold.begin(), fold.end());
        for (int id : unique) counts[id] += 1;
    }
    const int k = static_cast<int>(per_fold_sets.size());

    auto collect = [&](auto&& predicate) {
        std::vector<int> out;
        for (const auto& [id, count] : counts) {
            if (predicate(count)) out.push_back(id);
        }
        return out;
    };

    ConsensusResult result;
    switch (policy) {
        case ConsensusPolicy::Union:
            result.selected = collect([](int) { return true; });
            break;
        case ConsensusPolicy::Majority:
            result.selected = collect([&](int c) { return 2 * c > k; });
            break;
        case ConsensusPolicy::Intersection:
            result.selected = collect([&](int c) { return c == k; });
            if (result.selected.empty()) {
                result.warnings.push_back(
                    "intersection consensus is empty; falling back to majority");
                result.selected = collect([&](int c) { return 2 * c > k; });
            }
            break;
    }
    return result;
}

nlohmann::json selection_to_json(const SelectionResult& result, const std::vector<int>& roi_ids) {
    const Index d = result.consensus_rank.size();
    const std::vector<int> ids = roi_ids.empty() ? default_ids(d) : roi_ids;
    if (static_cast<Index>(ids.size()) != d) {
        throw DataError("DimensionMismatch", "roi_ids length must match rank length");
    }

    nlohmann::json ranks = nlohmann::json::array();
    for (Index c = 0; c < d; ++c) {
        if (std::isfinite(result.consensus_rank(c))) {
            ranks.push_back({{"roi_id", ids[static_cast<std::size_t>(c)]},
                             {"rank", result.consensus_rank(c)}});
        }
    }
    auto to_ids = [&](const std::vector<Index>& cols) {
        std::vector<int> out;
        out.reserve(cols.size());
        for (Index c : cols) out.push_back(ids[static_cast<std::size_t>(c)]);
        return out;
    };
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& pt : result.rfe_trace) {
        trace.push_back({{"n_features", pt.n_features}, {"val_score", pt.val_score}});
    }
    return {{"consensus_rank", std::move(ranks)},
            {"prekeep", to_ids(result.prekeep_set)},
            {"rfe_trace", std::move(trace)},
            {"selected", to_ids(result.selected)},
            {"warnings", result.warnings}};
}

}  // namespace absorbkit
