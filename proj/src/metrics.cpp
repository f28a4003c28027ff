#include "absorbkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace absorbkit {

Confusion confusion_from(const IntVector& y_true, const IntVector& y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw DataError("DimensionMismatch", "y_true and y_pred lengths differ");
    }
    Confusion c;
    for (Index i = 0; i < y_true.size(); ++i) {
        const int t = y_true(i), p = y_pred(i);
        if ((t != 0 && t != 1) || (p != 0 && p != 1)) {
            throw DataError("BadLabel", "labels must be 0 or 1");
        }
        if (t == 1) {
            (p == 1 ? c.tp : c.fn)++;
        } else {
            (p == 1 ? c.fp : c.tn)++;
        }
    }
    return c;
}

std::optional<double> kappa_score(const Confusion& c) {
    const long long tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn;
    const long long denom = (tp + fp) * (fp + tn) + (tp + fn) * (fn + tn);
    if (denom == 0) return std::nullopt;
    return 2.0 * static_cast<double>(tp * tn - fn * fp) / static_cast<double>(denom);
}

std::optional<double> auc_score(const IntVector& y_true, const Vector& scores) {
    if (y_true.size() != scores.size()) {
        throw DataError("DimensionMismatch", "y_true and scores lengths differ");
    }
    const Index n = y_true.size();
    long n_pos = 0;
    for (Index i = 0; i < n; ++i) n_pos += (y_true(i) == 1) ? 1 : 0;
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return scores(a) < scores(b); });

    // rank sum of positives with average ranks over score ties
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) {
            if (y_true(order[k]) == 1) pos_rank_sum += avg_rank;
        }
        i = j + 1;
    }
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport compute_metrics(const IntVector& y_true, const Vector& probs,
                              const IntVector& y_pred) {
    if (y_true.size() == 0) throw DataError("EmptyEvaluation", "no samples to score");
    MetricsReport r;
    r.confusion = confusion_from(y_true, y_pred);
    r.n = r.confusion.n();

    const auto& c = r.confusion;
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(r.n);
    r.kappa = kappa_score(c);
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (c.tn + c.fp > 0) r.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    if (r.precision && r.recall && (*r.precision + *r.recall) > 0.0) {
        r.f1 = 2.0 * (*r.precision) * (*r.recall) / (*r.precision + *r.recall);
    }
    r.auc = auc_score(y_true, probs);
    return r;
}

nlohmann::json metrics_to_json(const MetricsReport& r) {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("Acc", r.accuracy);
    put("CK", r.kappa);
    put("AUC", r.auc);
    put("Precision", r.precision);
    put("Recall", r.recall);
    put("F1", r.f1);
    put("Specificity", r.specificity);
    put("p-Value", r.p_value);
    j["confusion"] = {{"tp", r.confusion.tp},
                      {"fp", r.confusion.fp},
                      {"fn", r.confusion.fn},
                      {"tn", r.confusion.tn}};
    j["n"] = r.n;
    return j;
}

MetricSummary summarize_metric(const std::vector<std::optional<double>>& values) {
    MetricSummary s;
    double sum = 0.0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++s.defined;
        } else {
            ++s.missing;
        }
    }
    if (s.defined == 0) return s;
    const double mean = sum / s.defined;
    double ss = 0.0;
    for (const auto& v : values) {
        if (v) ss += (*v - mean) * (*v - mean);
    }
    s.mean = mean;
    s.sd = std::sqrt(ss / s.defined);
    return s;
}

}  // namespace absorbkit
