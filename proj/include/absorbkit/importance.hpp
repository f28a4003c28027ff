#ifndef ABSORBKIT_IMPORTANCE_HPP
#define ABSORBKIT_IMPORTANCE_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "absorbkit/common.hpp"
#include "absorbkit/ensemble.hpp"
#include "absorbkit/models.hpp"
#include "absorbkit/rng.hpp"

namespace absorbkit {

/// Per-roi feature impact from up to three views plus leave-one-region-out
/// drop counts. View keys: "forest" (impurity), "linear" (|coefficients|),
/// "permutation" (shuffle-based). Every view is normalized to [0,1] before
/// it enters the map; aggregated is the per-roi mean of the present views.
struct ImportanceMap {
    std::map<std::string, Vector> per_view;
    Vector aggregated;
    std::vector<int> loro_drop_counts;
};

using Predictor = std::function<IntVector(const Matrix&)>;

/// Mean accuracy drop when one column is shuffled, repeated `repeats`
/// times; negative drops floor at 0. The rng is consumed sequentially
/// (feature-major, repeat-minor), so results are deterministic.
Vector permutation_importance(const Predictor& predict, const Matrix& x_eval,
                              const IntVector& y_eval, int repeats, Rng& rng);
Vector permutation_importance(const TrainedModel& model, const Matrix& x_eval,
                              const IntVector& y_eval, int repeats, Rng& rng);
Vector permutation_importance(const Ensemble& ensemble, const Matrix& x_eval,
                              const IntVector& y_eval, int repeats, Rng& rng);

/// (v - min) / (max - min); a constant vector maps to all zeros.
Vector normalize01(const Vector& v);

/// Per-element mean over the views present in the map.
Vector aggregate_views(const std::map<std::string, Vector>& per_view);

/// For each column, replace it with `neutral_values` (train means) and
/// count how many classifiers lose accuracy strictly, against their own
/// baseline on the untouched x_eval.
std::vector<int> leave_one_region_out(const std::vector<TrainedModel>& classifiers,
                                      const Matrix& x_eval, const IntVector& y_eval,
                                      const Vector& neutral_values);

}  // namespace absorbkit

#endif
