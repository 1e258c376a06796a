#include "helpers.hpp"

#include "taskagg/error.hpp"
#include "taskagg/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace taskagg;

namespace {

MonteCarloOptions options(Eigen::Index n_train, Eigen::Index replicates, std::uint64_t seed) {
    MonteCarloOptions o;
    o.n_train = n_train;
    o.replicates = replicates;
    o.n_eval = 10000;
    o.seed = seed;
    return o;
}

Eigen::MatrixXd fixed_coefficients(Eigen::Index D, Eigen::Index L) {
    Eigen::MatrixXd W(D, L);
    for (Eigen::Index t = 0; t < L; ++t) {
        for (Eigen::Index k = 0; k < D; ++k) W(k, t) = std::sin(1.0 + static_cast<double>(k * (t + 2)));
    }
    return W;
}

}  // namespace

TEST(NoiseVariance, RemarkExamples) {
    EXPECT_DOUBLE_EQ(aggregated_noise_variance(NoiseModel::independent(2, 1.0), {0, 1}), 0.5);
    EXPECT_DOUBLE_EQ(aggregated_noise_variance(NoiseModel::equicorrelated(2, 1.0, 1.0), {0, 1}), 1.0);
    EXPECT_NEAR(aggregated_noise_variance(NoiseModel::equicorrelated(2, 1.0, -1.0), {0, 1}), 0.0, 1e-15);
    // sigma^2 / K (1 + (K - 1) rho)
    EXPECT_NEAR(aggregated_noise_variance(NoiseModel::equicorrelated(5, 2.0, 0.3), {0, 1, 2, 3, 4}),
                4.0 / 5.0 * (1.0 + 4.0 * 0.3), 1e-12);
    EXPECT_THROW(aggregated_noise_variance(NoiseModel::independent(2, 1.0), {0, 2}), ValidationError);
    EXPECT_THROW(aggregated_noise_variance(NoiseModel::independent(2, 1.0), {}), ValidationError);
}

TEST(TheoreticalVariance, Examples) {
    EXPECT_NEAR(theoretical_variance(1.0, 101, 1), 0.01, 1e-15);
    EXPECT_NEAR(theoretical_variance(4.0, 2001, 10), 0.02, 1e-15);
    EXPECT_DOUBLE_EQ(theoretical_variance(1.3, 50, 8), 2.0 * theoretical_variance(1.3, 50, 4));
    EXPECT_THROW(theoretical_variance(1.0, 1, 1), ValidationError);
}

TEST(TheoreticalBias, SingleAndMulti) {
    EXPECT_EQ(theoretical_bias_single(3.0, 1.0), 0.0);
    EXPECT_EQ(theoretical_bias_single(3.0, 0.0), 3.0);
    EXPECT_DOUBLE_EQ(theoretical_bias_single(2.0, 0.75), 0.5);
    const BiasDecomposition d = make_bias_decomposition(2.0, 1.5, 0.4, -0.1, 0.3);
    EXPECT_EQ(d.bias_value, 2.0 - 1.5 * 0.4 + 2.0 * (-0.1 - 0.3));
    EXPECT_EQ(theoretical_bias_multi(d), d.bias_value);
}

TEST(PartialCovariance, EqualsCovarianceOfResiduals) {
    const Eigen::MatrixXd Z = testutil::gaussian(500, 5, 1);
    const Eigen::MatrixXd Phi = Z.leftCols(3);
    const Eigen::VectorXd a = Z.col(3) + Phi.col(0);
    const Eigen::VectorXd b = Z.col(4) - Phi.col(0) + 0.5 * Z.col(3);
    const Eigen::MatrixXd Pc = testutil::centered(Phi);
    auto resid = [&](const Eigen::VectorXd& v) {
        const Eigen::VectorXd vc = v.array() - v.mean();
        return Eigen::VectorXd(vc - Pc * Pc.colPivHouseholderQr().solve(vc));
    };
    const double expected = resid(a).dot(resid(b)) / 499.0;
    std::string diag;
    EXPECT_NEAR(partial_covariance(a, b, Phi, &diag), expected, 1e-12);
    EXPECT_TRUE(diag.empty());
}

TEST(PartialCovariance, SingularInputsUsePseudoInverse) {
    Eigen::MatrixXd Phi = testutil::gaussian(200, 3, 2);
    Phi.col(2) = Phi.col(0);
    const Eigen::VectorXd a = testutil::gaussian(200, 1, 3).col(0) + Phi.col(0);
    std::string diag;
    const double v = partial_covariance(a, a, Phi, &diag);
    EXPECT_FALSE(diag.empty());
    EXPECT_NEAR(v, partial_covariance(a, a, Phi.leftCols(2)), 1e-10);
}

TEST(PopulationBias, SingletonCollapsesToSingleTaskBias) {
    const LinearGenerator gen(fixed_coefficients(6, 1), NoiseModel::independent(1, 0.0));
    const Partition features({{0, 1}, {2, 3, 4}, {5}}, 6);
    const BiasDecomposition d = population_bias_decomposition(gen, {{0}, 0, features}, 100000, 1);
    const PopulationFit fit = population_fit(gen, 0, features, 100000, 1);
    EXPECT_NEAR(d.bias_value, fit.bias, 1e-10);
    EXPECT_NEAR(d.partial_cov, 0.0, 1e-12);
    EXPECT_NEAR(d.plain_cov, 0.0, 1e-12);
    EXPECT_GT(fit.r2, 0.0);
    EXPECT_LT(fit.r2, 1.0);
}

TEST(PopulationBias, AssemblyMatchesDirectResidualVariance) {
    const LinearGenerator gen(fixed_coefficients(8, 3), NoiseModel::independent(3, 1.0));
    const Partition features({{0, 4}, {1, 2}, {3}, {5, 6, 7}}, 8);
    const BiasDecomposition d = population_bias_decomposition(gen, {{0, 2}, 0, features}, 20000, 2);
    EXPECT_NEAR(d.bias_value, d.direct_value, 1e-8 * (1.0 + d.direct_value));
    EXPECT_NE(d.partial_cov, d.plain_cov);
}

TEST(MonteCarlo, SingletonVarianceMatchesTheory) {
    const Eigen::Index D = 5, n = 200;
    const LinearGenerator gen(fixed_coefficients(D, 1), NoiseModel::independent(1, 1.0));
    const auto est = monte_carlo_bias_variance(gen, {{0}, 0, Partition::singletons(D)}, options(n, 500, 3));
    const double theory = theoretical_variance(1.0, n, D);
    EXPECT_LE(std::abs(est.variance_term - theory) / theory, 0.10);
    EXPECT_EQ(est.noise_term, 1.0);
    EXPECT_EQ(est.replicates, 500);
}

TEST(MonteCarlo, NoiselessGeneratorHasNoBias) {
    const LinearGenerator gen(fixed_coefficients(4, 1), NoiseModel::independent(1, 0.0));
    const auto est = monte_carlo_bias_variance(gen, {{0}, 0, Partition::singletons(4)}, options(50, 100, 4));
    EXPECT_EQ(est.noise_term, 0.0);
    EXPECT_LT(std::abs(est.bias_term), 1e-12);
    EXPECT_LT(est.variance_term, 1e-20);
}

TEST(MonteCarlo, TwoTaskClusterHalvesVariance) {
    const Eigen::Index D = 5, n = 200;
    const LinearGenerator gen(fixed_coefficients(D, 2), NoiseModel::independent(2, 1.0));
    const auto paired = compare_pipelines(gen, {{0}, 0, Partition::singletons(D)},
                                          {{0, 1}, 0, Partition::singletons(D)}, options(n, 500, 5));
    EXPECT_LE(std::abs(paired.b.variance_term / paired.a.variance_term - 0.5) / 0.5, 0.15);
}

TEST(MonteCarlo, DecompositionCloses) {
    const LinearGenerator gen(fixed_coefficients(6, 2), NoiseModel::equicorrelated(2, 1.5, 0.4));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto est = monte_carlo_bias_variance(gen, {{0, 1}, 1, Partition({{0, 1}, {2}, {3, 4, 5}}, 6)},
                                                   options(60, 200, seed));
        const double sum = est.variance_term + est.bias_term + est.noise_term;
        EXPECT_LE(std::abs(est.total_mse - sum), 3.0 * est.closure_se) << seed;
        EXPECT_GT(est.variance_se, 0.0);
        EXPECT_GT(est.bias_se, 0.0);
        EXPECT_GT(est.total_se, 0.0);
    }
}

TEST(MonteCarlo, ReproducibleAcrossThreadCounts) {
    const LinearGenerator gen(fixed_coefficients(4, 2), NoiseModel::independent(2, 1.0));
    const Pipeline p{{0, 1}, 0, Partition::singletons(4)};
    MonteCarloOptions o = options(40, 120, 6);
    const auto a = monte_carlo_bias_variance(gen, p, o);
    o.jobs = 3;
    const auto b = monte_carlo_bias_variance(gen, p, o);
    EXPECT_NEAR(a.variance_term, b.variance_term, 1e-10);
    EXPECT_NEAR(a.bias_term, b.bias_term, 1e-10);
    EXPECT_NEAR(a.total_mse, b.total_mse, 1e-10);
}

TEST(MonteCarlo, FlagsSmallBudgetAndValidatesInputs) {
    const LinearGenerator gen(fixed_coefficients(4, 1), NoiseModel::independent(1, 1.0));
    const Pipeline p{{0}, 0, Partition::singletons(4)};
    MonteCarloOptions o = options(30, 20, 7);
    o.target_relative_se = 1e-4;
    const auto est = monte_carlo_bias_variance(gen, p, o);
    EXPECT_TRUE(est.budget_warning);
    EXPECT_FALSE(est.warning.empty());
    EXPECT_THROW(monte_carlo_bias_variance(gen, {{0}, 0, Partition::singletons(5)}, o), ValidationError);
    EXPECT_THROW(monte_carlo_bias_variance(gen, {{1}, 0, Partition::singletons(4)}, o), ValidationError);
    o.n_train = 4;
    EXPECT_THROW(monte_carlo_bias_variance(gen, p, o), ValidationError);
}

TEST(CoefficientCovariance, OrthonormalDesignGivesScaledIdentity) {
    const Eigen::Index n = 100, D = 4;
    const Eigen::MatrixXd Z = testutil::centered(testutil::gaussian(n, D, 8));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, D);
    const double sigma = 1.5;
    const auto rep = coefficient_covariance_check(Q, Eigen::VectorXd::Ones(D), sigma, 2000, 9);
    // with orthonormal centered columns the sample covariance is I / (n - 1)
    EXPECT_LE((rep.theoretical - sigma * sigma * Eigen::MatrixXd::Identity(D, D)).cwiseAbs().maxCoeff(), 1e-9);
    for (Eigen::Index k = 0; k < D; ++k) {
        EXPECT_LE(std::abs(rep.empirical(k, k) - sigma * sigma) / (sigma * sigma), 0.10);
    }
}

TEST(CoefficientCovariance, CorrelatedColumnsHaveNegativeOffDiagonal) {
    const LinearGenerator gen(Eigen::Vector2d(1.0, 1.0), NoiseModel::independent(1, 1.0), equicorrelation(2, 0.5));
    const auto rep = coefficient_covariance_check(gen, 200, 2000, 10);
    EXPECT_LT(rep.theoretical(0, 1), 0.0);
    EXPECT_LT(rep.empirical(0, 1), 0.0);
    EXPECT_LE(rep.max_relative_deviation, 0.10);
    EXPECT_EQ(rep.entries_compared, 3);
}

TEST(CoefficientCovariance, NoiselessAndSingularCases) {
    const Eigen::MatrixXd X = testutil::gaussian(50, 3, 11);
    const auto rep = coefficient_covariance_check(X, Eigen::Vector3d(1, 2, 3), 0.0, 50, 12);
    EXPECT_LT(rep.empirical.cwiseAbs().maxCoeff(), 1e-24);
    Eigen::MatrixXd S = X;
    S.col(2) = S.col(1);
    EXPECT_THROW(coefficient_covariance_check(S, Eigen::Vector3d(1, 2, 3), 1.0, 50, 12), NumericalError);
}

TEST(DeltaMse, IdenticalNoiseGivesNoVarianceGain) {
    const LinearGenerator gen(fixed_coefficients(5, 2), NoiseModel::equicorrelated(2, 1.0, 1.0));
    const auto rep = delta_mse_check(gen, {0, 1}, 0, options(100, 300, 13), 50000);
    EXPECT_EQ(rep.delta_variance_theory, 0.0);
    EXPECT_TRUE(rep.variance_pass);
    EXPECT_TRUE(rep.bias_pass);
}

TEST(DeltaMse, IndependentPairHalvesTheNoiseTerm) {
    const Eigen::Index D = 5, n = 100;
    const LinearGenerator gen(fixed_coefficients(D, 2), NoiseModel::independent(2, 1.0));
    const auto rep = delta_mse_check(gen, {0, 1}, 1, options(n, 500, 14), 50000);
    EXPECT_NEAR(rep.delta_variance_theory, 0.5 * D / static_cast<double>(n - 1), 1e-15);
    EXPECT_TRUE(rep.pass());
}

TEST(DeltaMse, IdenticalTasksHaveNoBiasIncrease) {
    Eigen::MatrixXd W(4, 2);
    W.col(0) = Eigen::Vector4d(1.0, -0.5, 0.25, 2.0);
    W.col(1) = W.col(0);
    const LinearGenerator gen(W, NoiseModel::independent(2, 1.0));
    const auto rep = delta_mse_check(gen, {0, 1}, 0, options(80, 300, 15), 50000);
    EXPECT_NEAR(rep.delta_bias_theory, 0.0, 1e-12);
    EXPECT_LE(std::abs(rep.delta_bias), 3.0 * rep.delta_bias_se + 1e-12);
    EXPECT_THROW(delta_mse_check(gen, {1}, 0, options(80, 30, 15)), ValidationError);
}
