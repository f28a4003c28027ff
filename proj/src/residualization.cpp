#include "absorbkit/residualization.hpp"

#include <Eigen/QR>

namespace absorbkit {

namespace {

Matrix with_intercept(const Matrix& c) {
    Matrix design(c.rows(), c.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(c.cols()) = c;
    return design;
}

}  // namespace

ResidualModel fit_residualizer(const Matrix& x, const Matrix& c,
                               std::vector<std::string> covariate_names) {
    if (x.rows() != c.rows()) {
        throw DataError("DimensionMismatch", "feature rows " + std::to_string(x.rows()) +
                                                 " vs covariate rows " + std::to_string(c.rows()));
    }
    if (covariate_names.empty()) {
        for (Index j = 0; j < c.cols(); ++j) covariate_names.push_back("c" + std::to_string(j + 1));
    }
    if (static_cast<Index>(covariate_names.size()) != c.cols()) {
        throw ConfigError("BadCovariateNames", "expected " + std::to_string(c.cols()) +
                                                   " names, got " +
                                                   std::to_string(covariate_names.size()));
    }

    const Matrix design = with_intercept(c);
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    if (qr.rank() < design.cols()) {
        throw DataError("RankDeficient", "covariate design has rank " +
                                             std::to_string(qr.rank()) + " < " +
                                             std::to_string(design.cols()) +
                                             "; drop collinear covariates");
    }

    ResidualModel m;
    m.coefficients = qr.solve(x);
    m.covariate_names = std::move(covariate_names);
    m.fit_n = x.rows();
    if (c.cols() > 0) {
        m.cov_min = c.colwise().minCoeff();
        m.cov_max = c.colwise().maxCoeff();
    }
    return m;
}

ResidualApply apply_residualizer(const ResidualModel& m, const Matrix& x, const Matrix& c,
                                 const std::vector<std::string>& covariate_names) {
    if (covariate_names != m.covariate_names) {
        throw DataError("CovariateMismatch", "covariate names do not match the fitted model");
    }
    if (c.cols() + 1 != m.coefficients.rows()) {
        throw DataError("CovariateMismatch", "model was fit with " +
                                                 std::to_string(m.coefficients.rows() - 1) +
                                                 " covariates, got " + std::to_string(c.cols()));
    }
    if (x.rows() != c.rows() || x.cols() != m.coefficients.cols()) {
        throw DataError("DimensionMismatch", "feature block does not line up with the model");
    }

    ResidualApply out;
    out.residuals = x - with_intercept(c) * m.coefficients;

    long outside = 0;
    for (Index i = 0; i < c.rows(); ++i) {
        for (Index j = 0; j < c.cols(); ++j) {
            if (c(i, j) < m.cov_min(j) || c(i, j) > m.cov_max(j)) {
                ++outside;
                break;
            }
        }
    }
    if (outside > 0) {
        out.warnings.push_back(std::to_string(outside) +
                               " row(s) have covariates outside the fit range; "
                               "linear extrapolation applied");
    }
    return out;
}

}  // namespace absorbkit
