#include "taskagg/linstats.hpp"

#include "taskagg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace taskagg {

namespace {

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() < 2) throw ValidationError("least squares needs n >= 2, got " + std::to_string(X.rows()));
    if (X.cols() < 1) throw ValidationError("least squares needs at least one input column");
    if (X.rows() != y.size()) {
        throw ValidationError("design has " + std::to_string(X.rows()) + " rows, target has " +
                              std::to_string(y.size()));
    }
}

}  // namespace

double sample_variance(const Eigen::VectorXd& v) {
    if (v.size() < 2) throw ValidationError("variance needs at least 2 values");
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

double sample_covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ValidationError("covariance of vectors with different lengths");
    if (a.size() < 2) throw ValidationError("covariance needs at least 2 values");
    return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / static_cast<double>(a.size() - 1);
}

LeastSquares::LeastSquares(const Eigen::MatrixXd& design) : design_(design), cod_(design) {
    if (design.rows() < 2) {
        throw ValidationError("least squares needs n >= 2, got " + std::to_string(design.rows()));
    }
    if (design.cols() < 1) throw ValidationError("least squares needs at least one input column");
}

Eigen::VectorXd LeastSquares::solve(const Eigen::VectorXd& y) const {
    if (y.size() != design_.rows()) {
        throw ValidationError("design has " + std::to_string(design_.rows()) + " rows, target has " +
                              std::to_string(y.size()));
    }
    return cod_.solve(y);
}

OlsFit LeastSquares::fit(const Eigen::VectorXd& y) const {
    OlsFit f;
    f.coefficients = solve(y);
    f.residuals = y - design_ * f.coefficients;
    f.n = design_.rows();
    f.d = design_.cols();
    f.rank = cod_.rank();
    f.residual_variance = sample_variance(f.residuals);
    f.target_variance = sample_variance(y);
    f.mse = f.residuals.squaredNorm() / static_cast<double>(f.n);
    f.r2 = f.target_variance > 0.0 ? 1.0 - f.residual_variance / f.target_variance
                                   : std::numeric_limits<double>::quiet_NaN();
    return f;
}

OlsFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    check_shapes(X, y);
    return LeastSquares(X).fit(y);
}

double r2_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    check_shapes(X, y);
    if (sample_variance(y) == 0.0) throw NumericalError("R^2 is undefined for a constant target");
    return ols_fit(X, y).r2;
}

double var_res(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    return ols_fit(X, y).residual_variance;
}

Moments moments(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Moments m;
    m.variance_a = sample_variance(a);
    m.variance_b = sample_variance(b);
    m.covariance = sample_covariance(a, b);
    if (m.variance_a > 0.0 && m.variance_b > 0.0) {
        const double r = m.covariance / std::sqrt(m.variance_a * m.variance_b);
        m.correlation = std::clamp(r, -1.0, 1.0);
    }
    return m;
}

double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& actuals) {
    if (predictions.size() != actuals.size()) throw ValidationError("mse of vectors with different lengths");
    if (actuals.size() < 1) throw ValidationError("mse of empty vectors");
    return (predictions - actuals).squaredNorm() / static_cast<double>(actuals.size());
}

double nrmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& actuals) {
    const double err = mse(predictions, actuals);
    const double range = actuals.maxCoeff() - actuals.minCoeff();
    if (range == 0.0) throw NumericalError("nrmse is undefined when the actuals have zero range");
    return std::sqrt(err) / range;
}

}  // namespace taskagg
