#pragma once

#include <Eigen/Dense>

#include <optional>

namespace taskagg {

/// No-intercept least-squares fit. Rank-deficient designs get the
/// minimum-norm coefficient vector. Variances use the n-1 divisor; `mse`
/// is the plain mean of squared residuals.
struct OlsFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
    double r2 = 0.0;  // 1 - residual_variance / target_variance; NaN when the target is constant
    double residual_variance = 0.0;
    double target_variance = 0.0;
    double mse = 0.0;
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    Eigen::Index rank = 0;
};

/// A factored design matrix that can be fitted against many targets.
class LeastSquares {
public:
    explicit LeastSquares(const Eigen::MatrixXd& design);

    OlsFit fit(const Eigen::VectorXd& y) const;
    Eigen::VectorXd solve(const Eigen::VectorXd& y) const;

    Eigen::Index rows() const { return design_.rows(); }
    Eigen::Index cols() const { return design_.cols(); }
    Eigen::Index rank() const { return cod_.rank(); }

private:
    Eigen::MatrixXd design_;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_;
};

OlsFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// In-sample R^2 of the OLS fit. Throws NumericalError for constant y.
double r2_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Sample variance of the OLS residuals.
double var_res(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

double sample_variance(const Eigen::VectorXd& v);
double sample_covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct Moments {
    double variance_a = 0.0;
    double variance_b = 0.0;
    double covariance = 0.0;
    std::optional<double> correlation;  // empty when either variance is zero
};

Moments moments(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& actuals);

/// sqrt(mse) divided by the range of `actuals`.
double nrmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& actuals);

}  // namespace taskagg
