#ifndef ABSORBKIT_METRICS_HPP
#define ABSORBKIT_METRICS_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "absorbkit/common.hpp"

#include "json.hpp"

namespace absorbkit {

struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    long n() const { return tp + fp + fn + tn; }
};

Confusion confusion_from(const IntVector& y_true, const IntVector& y_pred);

/// Binary classification report. A metric whose denominator is zero is
/// absent (std::nullopt), never coerced to 0; JSON output drops the key.
struct MetricsReport {
    std::optional<double> accuracy;
    std::optional<double> kappa;
    std::optional<double> auc;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> specificity;
    std::optional<double> p_value;
    Confusion confusion;
    long n = 0;
};

/// Accuracy, Cohen's kappa, AUC and the confusion-derived rates.
/// kappa uses the cross-product form 2(tp*tn - fn*fp) / ((tp+fp)(fp+tn) +
/// (tp+fn)(fn+tn)), algebraically equal to (p_o - p_e)/(1 - p_e) but exact
/// for integer-friendly ratios. AUC is the Mann-Whitney statistic from
/// average ranks, so score ties earn half credit; it is absent unless both
/// classes appear in y_true.
MetricsReport compute_metrics(const IntVector& y_true, const Vector& probs,
                              const IntVector& y_pred);

/// AUC alone (same tie handling); absent when y_true has a single class.
std::optional<double> auc_score(const IntVector& y_true, const Vector& scores);

/// Cohen's kappa from a confusion matrix; absent when chance agreement is 1.
std::optional<double> kappa_score(const Confusion& c);

/// Keys exactly as reported: Acc, CK, AUC, Precision, Recall, F1,
/// Specificity, p-Value, plus confusion counts and n.
nlohmann::json metrics_to_json(const MetricsReport& r);

/// Mean and population SD over the defined values of one metric across
/// fold reports; absent entries are skipped and counted.
struct MetricSummary {
    std::optional<double> mean;
    std::optional<double> sd;
    int defined = 0;
    int missing = 0;
};
MetricSummary summarize_metric(const std::vector<std::optional<double>>& values);

}  // namespace absorbkit

#endif
