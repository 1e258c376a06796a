#include "helpers.hpp"

#include "taskagg/error.hpp"
#include "taskagg/linstats.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace taskagg;

TEST(OlsFit, ExactLinearTarget) {
    Eigen::MatrixXd X(4, 1);
    X << -1.5, -0.5, 0.5, 1.5;
    const OlsFit f = ols_fit(X, 2.0 * X.col(0));
    EXPECT_NEAR(f.coefficients(0), 2.0, 1e-10);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_NEAR(f.residual_variance, 0.0, 1e-12);
}

TEST(OlsFit, TargetOrthogonalToInputs) {
    Eigen::MatrixXd X(4, 2);
    X << 1, 1, -1, 1, 1, -1, -1, -1;
    Eigen::VectorXd y(4);
    y << 1, -1, -1, 1;
    const OlsFit f = ols_fit(X, y);
    EXPECT_LE(f.coefficients.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(f.r2, 0.0, 1e-12);
}

TEST(OlsFit, MatchesHandCodedNormalEquations) {
    Eigen::MatrixXd X(5, 2);
    X << 1.0, 0.3, -0.4, 1.2, 2.1, -0.7, -1.3, 0.2, 0.6, -1.1;
    Eigen::VectorXd y(5);
    y << 0.9, 1.7, -0.2, -1.4, 0.1;
    const double a = X.col(0).squaredNorm(), b = X.col(0).dot(X.col(1)), d = X.col(1).squaredNorm();
    const double det = a * d - b * b;
    const double u = X.col(0).dot(y), v = X.col(1).dot(y);
    const double w0 = (d * u - b * v) / det, w1 = (a * v - b * u) / det;
    const OlsFit f = ols_fit(X, y);
    EXPECT_NEAR(f.coefficients(0), w0, 1e-9);
    EXPECT_NEAR(f.coefficients(1), w1, 1e-9);
}

TEST(OlsFit, InvariantsOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Eigen::MatrixXd X = testutil::centered(testutil::gaussian(40, 6, seed));
        const Eigen::VectorXd y = testutil::centered(testutil::gaussian(40, 1, seed + 1000)).col(0);
        const OlsFit f = ols_fit(X, y);
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            EXPECT_LE(std::abs(f.residuals.dot(X.col(c))), 1e-8 * X.col(c).norm());
        }
        EXPECT_NEAR(f.r2, 1.0 - f.residual_variance / f.target_variance, 1e-10);
        EXPECT_NEAR(var_res(X, y), sample_variance(y) * (1.0 - r2_score(X, y)), 1e-10);
        EXPECT_DOUBLE_EQ(r2_score(X, y), f.r2);
        // local-minimum probe
        for (Eigen::Index k = 0; k < X.cols(); ++k) {
            for (double step : {1e-3, -1e-3}) {
                Eigen::VectorXd w = f.coefficients;
                w(k) += step;
                EXPECT_GE(mse(X * w, y), f.mse);
            }
        }
    }
}

TEST(OlsFit, ScaleEquivariance) {
    const Eigen::MatrixXd X = testutil::centered(testutil::gaussian(30, 4, 1));
    const Eigen::VectorXd y = testutil::centered(testutil::gaussian(30, 1, 2)).col(0);
    const OlsFit f = ols_fit(X, y);
    const OlsFit g = ols_fit(X, -3.5 * y);
    EXPECT_LE((g.coefficients + 3.5 * f.coefficients).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(g.mse, 12.25 * f.mse, 1e-9);
    EXPECT_NEAR(g.r2, f.r2, 1e-9);
}

TEST(OlsFit, DuplicateColumnLeavesFitUnchanged) {
    const Eigen::MatrixXd X = testutil::centered(testutil::gaussian(30, 3, 3));
    const Eigen::VectorXd y = testutil::centered(testutil::gaussian(30, 1, 4)).col(0);
    Eigen::MatrixXd Xd(30, 4);
    Xd << X, X.col(1);
    const OlsFit a = ols_fit(X, y);
    const OlsFit b = ols_fit(Xd, y);
    EXPECT_EQ(b.rank, 3);
    EXPECT_NEAR(a.r2, b.r2, 1e-8);
    EXPECT_LE((X * a.coefficients - Xd * b.coefficients).cwiseAbs().maxCoeff(), 1e-8);
    // minimum norm splits the weight evenly between the copies
    EXPECT_NEAR(b.coefficients(1), b.coefficients(3), 1e-8);
}

TEST(OlsFit, ShapeErrors) {
    EXPECT_THROW(ols_fit(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1)), ValidationError);
    EXPECT_THROW(ols_fit(Eigen::MatrixXd::Ones(4, 1), Eigen::VectorXd::Ones(3)), ValidationError);
}

TEST(R2Score, ConstantTargetIsNumericalError) {
    const Eigen::MatrixXd X = testutil::gaussian(10, 2, 1);
    EXPECT_THROW(r2_score(X, Eigen::VectorXd::Constant(10, 2.0)), NumericalError);
    EXPECT_TRUE(std::isnan(ols_fit(X, Eigen::VectorXd::Zero(10)).r2));
}

TEST(R2Score, InSampleOptimismMatchesDOverNMinusOne) {
    const Eigen::Index n = 1000, D = 10;
    double total = 0.0;
    for (std::uint64_t r = 0; r < 200; ++r) {
        const Eigen::MatrixXd X = testutil::centered(testutil::gaussian(n, D, 2 * r));
        const Eigen::VectorXd y = testutil::centered(testutil::gaussian(n, 1, 2 * r + 1)).col(0);
        total += r2_score(X, y);
    }
    EXPECT_NEAR(total / 200.0, static_cast<double>(D) / static_cast<double>(n - 1), 0.005);
}

TEST(VarRes, NoiselessTargetIsZero) {
    const Eigen::MatrixXd X = testutil::centered(testutil::gaussian(20, 3, 5));
    EXPECT_NEAR(var_res(X, X * Eigen::Vector3d(1.0, -2.0, 0.5)), 0.0, 1e-12);
}

TEST(VarRes, RecoversNoiseVariance) {
    const Eigen::MatrixXd Z = testutil::gaussian(10000, 2, 6);
    Eigen::MatrixXd X = testutil::centered(Z.col(0));
    const Eigen::VectorXd y = testutil::centered(Z.col(0) + 2.0 * Z.col(1)).col(0);
    const double v = var_res(X, y);
    EXPECT_GE(v, 3.6);
    EXPECT_LE(v, 4.4);
}

TEST(Moments, HandComputedValues) {
    Eigen::Vector4d a(1, 2, 3, 4), b(2, 4, 5, 7);
    const Moments m = moments(a, b);
    EXPECT_NEAR(m.variance_a, 5.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.covariance, 8.0 / 3.0, 1e-12);
    ASSERT_TRUE(m.correlation.has_value());
    EXPECT_NEAR(moments(a, a).correlation.value(), 1.0, 1e-12);
    EXPECT_NEAR(moments(a, -a).correlation.value(), -1.0, 1e-12);
}

TEST(Moments, ZeroVarianceHasNoCorrelation) {
    const Moments m = moments(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(4, 4, 4));
    EXPECT_FALSE(m.correlation.has_value());
    EXPECT_NEAR(m.variance_a, 1.0, 1e-12);
    EXPECT_EQ(m.covariance, 0.0);
    EXPECT_THROW(moments(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)), ValidationError);
}

TEST(Mse, BasicIdentities) {
    const Eigen::VectorXd a = testutil::gaussian(100, 1, 1).col(0);
    EXPECT_EQ(mse(a, a), 0.0);
    EXPECT_EQ(nrmse(a, a), 0.0);
    EXPECT_NEAR(mse(a.array() + 0.7, a), 0.49, 1e-12);
    const Eigen::VectorXd b = testutil::gaussian(100, 1, 2).col(0);
    double s = 0.0;
    for (Eigen::Index i = 0; i < 100; ++i) s += (a(i) - b(i)) * (a(i) - b(i));
    EXPECT_NEAR(mse(a, b), s / 100.0, 1e-12);
    EXPECT_NEAR(nrmse(a, b), std::sqrt(s / 100.0) / (b.maxCoeff() - b.minCoeff()), 1e-12);
    EXPECT_THROW(nrmse(a.head(3), Eigen::VectorXd::Ones(3)), NumericalError);
}
