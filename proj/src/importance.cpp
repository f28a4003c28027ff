#include "absorbkit/importance.hpp"

#include <algorithm>
#include <numeric>

namespace absorbkit {

namespace {

double accuracy_of(const IntVector& y_true, const IntVector& y_pred) {
    long hits = 0;
    for (Index i = 0; i < y_true.size(); ++i) hits += (y_true(i) == y_pred(i)) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

void check_eval(const Matrix& x, const IntVector& y) {
    if (x.rows() != y.size()) {
        throw DataError("DimensionMismatch", "eval rows " + std::to_string(x.rows()) +
                                                 " vs labels " + std::to_string(y.size()));
    }
    if (x.rows() < 1) throw DataError("EmptyDataset", "nothing to evaluate");
}

}  // namespace

Vector permutation_importance(const Predictor& predict, const Matrix& x_eval,
                              const IntVector& y_eval, int repeats, Rng& rng) {
    check_eval(x_eval, y_eval);
    if (repeats < 1) throw ConfigError("BadRepeats", "repeats must be >= 1");

    const Index n = x_eval.rows(), d = x_eval.cols();
    const double baseline = accuracy_of(y_eval, predict(x_eval));

    Vector importance(d);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    Matrix shuffled = x_eval;
    for (Index f = 0; f < d; ++f) {
        double mean_acc = 0.0;
        for (int r = 0; r < repeats; ++r) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order);
            for (Index i = 0; i < n; ++i) {
                shuffled(i, f) = x_eval(static_cast<Index>(order[static_cast<std::size_t>(i)]), f);
            }
            mean_acc += accuracy_of(y_eval, predict(shuffled));
        }
        mean_acc /= static_cast<double>(repeats);
        importance(f) = std::max(0.0, baseline - mean_acc);
        shuffled.col(f) = x_eval.col(f);
    }
    return importance;
}

Vector permutation_importance(const TrainedModel& model, const Matrix& x_eval,
                              const IntVector& y_eval, int repeats, Rng& rng) {
    return permutation_importance([&](const Matrix& x) { return model.predict(x); }, x_eval,
                                  y_eval, repeats, rng);
}

Vector permutation_importance(const Ensemble& ensemble, const Matrix& x_eval,
                              const IntVector& y_eval, int repeats, Rng& rng) {
    return permutation_importance(
        [&](const Matrix& x) { return ensemble_predict(ensemble, x).labels; }, x_eval, y_eval,
        repeats, rng);
}

Vector normalize01(const Vector& v) {
    if (v.size() == 0) return v;
    const double lo = v.minCoeff(), hi = v.maxCoeff();
    if (hi == lo) return Vector::Zero(v.size());
    return (v.array() - lo) / (hi - lo);
}

Vector aggregate_views(const std::map<std::string, Vector>& per_view) {
    if (per_view.empty()) throw DataError("NoViews", "at least one importance view is required");
    const Index d = per_view.begin()->second.size();
    Vector sum = Vector::Zero(d);
    for (const auto& [name, view] : per_view) {
        if (view.size() != d) {
            throw DataError("DimensionMismatch", "view " + name + " has " +
                                                     std::to_string(view.size()) +
                                                     " entries, expected " + std::to_string(d));
        }
        sum += view;
    }
    return sum / static_cast<double>(per_view.size());
}

std::vector<int> leave_one_region_out(const std::vector<TrainedModel>& classifiers,
                                      const Matrix& x_eval, const IntVector& y_eval,
                                      const Vector& neutral_values) {
    check_eval(x_eval, y_eval);
    if (classifiers.empty()) throw DataError("NoClassifiers", "nothing to probe");
    if (neutral_values.size() != x_eval.cols()) {
        throw DataError("DimensionMismatch",
                        "one neutral value per column required, got " +
                            std::to_string(neutral_values.size()) + " for " +
                            std::to_string(x_eval.cols()));
    }

    std::vector<double> baseline;
    baseline.reserve(classifiers.size());
    for (const auto& m : classifiers) baseline.push_back(accuracy_of(y_eval, m.predict(x_eval)));

    std::vector<int> counts(static_cast<std::size_t>(x_eval.cols()), 0);
    Matrix probe = x_eval;
    for (Index f = 0; f < x_eval.cols(); ++f) {
        probe.col(f).setConstant(neutral_values(f));
        int dropped = 0;
        for (std::size_t c = 0; c < classifiers.size(); ++c) {
            if (accuracy_of(y_eval, classifiers[c].predict(probe)) < baseline[c]) ++dropped;
        }
        counts[static_cast<std::size_t>(f)] = dropped;
        probe.col(f) = x_eval.col(f);
    }
    return counts;
}

}  // namespace absorbkit
