#ifndef ABSORBKIT_RESIDUALIZATION_HPP
#define ABSORBKIT_RESIDUALIZATION_HPP

#include <string>
#include <vector>

#include "absorbkit/common.hpp"

namespace absorbkit {

/// Per-roi linear phenomenology model: column r of `coefficients` holds
/// the intercept followed by one slope per covariate for roi r. The fit
/// covariate range is kept so extrapolation can be flagged at apply time.
struct ResidualModel {
    Matrix coefficients;  // (1 + n_covariates) x n_rois
    std::vector<std::string> covariate_names;
    long fit_n = 0;
    Vector cov_min, cov_max;
};

struct ResidualApply {
    Matrix residuals;
    std::vector<std::string> warnings;
};

/// Ordinary least squares of every feature column on [1 C], solved with a
/// rank-revealing QR. Covariates that are perfectly collinear (or fewer
/// rows than coefficients) raise DataError("RankDeficient").
ResidualModel fit_residualizer(const Matrix& x, const Matrix& c,
                               std::vector<std::string> covariate_names = {});

/// residual = X - [1 C] B with the frozen coefficients; never refits.
/// Covariate names and count must match the model. Rows outside the fit
/// covariate range are still transformed, with a warning noting how many.
ResidualApply apply_residualizer(const ResidualModel& m, const Matrix& x, const Matrix& c,
                                 const std::vector<std::string>& covariate_names);

}  // namespace absorbkit

#endif
