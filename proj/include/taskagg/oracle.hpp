#pragma once

#include "taskagg/generator.hpp"
#include "taskagg/partition.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace taskagg {

/// Variance of the mean of the noises in `cluster`:
/// (1/K^2) * sum_{h,k} sigma_h sigma_k rho_hk.
double aggregated_noise_variance(const NoiseModel& model, const Cluster& cluster);

/// sigma_bar^2 * d / (n - 1).
double theoretical_variance(double sigma_bar_sq, Eigen::Index n, Eigen::Index d);

/// var_f * (1 - r2).
double theoretical_bias_single(double var_f, double r2);

/// Population quantities entering the bias of a model trained on a cluster
/// mean and scored on one member task.
struct BiasDecomposition {
    double var_f_i = 0.0;      // variance of the member's noiseless signal
    double var_psi = 0.0;      // variance of the aggregated signal
    double r2_d_iota = 0.0;    // R^2 of the aggregated signal on the inputs
    double partial_cov = 0.0;  // cov(psi, f_i - psi | inputs)
    double plain_cov = 0.0;    // cov(psi, f_i - psi)
    double bias_value = 0.0;
    double standard_error = 0.0;  // of the direct estimate var(f_i - projection of psi)
    double direct_value = 0.0;    // var(f_i - projection of psi), the same quantity by another route
    std::string diagnostic;
};

/// Assembles the bias from the four population terms.
double theoretical_bias_multi(const BiasDecomposition& d);

/// Fills bias_value from the other fields.
BiasDecomposition make_bias_decomposition(double var_f_i, double var_psi, double r2_d_iota, double partial_cov,
                                          double plain_cov);

/// Sample partial covariance cov(a, b) - cov(a, Phi) cov(Phi)^-1 cov(Phi, b).
/// A singular input covariance falls back to the pseudo-inverse and sets
/// `diagnostic` when given.
double partial_covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& inputs,
                          std::string* diagnostic = nullptr);

/// A linear model trained on the mean of `cluster`'s targets, with inputs
/// given by the column means of `features`, and scored on task `task`.
struct Pipeline {
    Cluster cluster;
    std::size_t task = 0;
    Partition features;
};

/// D x d matrix whose column c averages the features of cluster c.
Eigen::MatrixXd aggregation_matrix(const Partition& features);

BiasDecomposition population_bias_decomposition(const LinearGenerator& generator, const Pipeline& pipeline,
                                                Eigen::Index n_pop, std::uint64_t seed);

struct MonteCarloOptions {
    Eigen::Index n_train = 200;
    Eigen::Index replicates = 500;
    Eigen::Index n_eval = 10000;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    double target_relative_se = 0.0;  // 0 disables the budget warning
};

/// Monte-Carlo split of the expected test error into the variance of the
/// fitted model over training sets, the squared bias of the average model
/// and the noise variance. Training sets are drawn with fresh features and
/// noise. Standard errors are leave-one-replicate-out jackknife errors
/// combined with the sampling error of the evaluation set.
struct BiasVarianceEstimate {
    double variance_term = 0.0;
    double bias_term = 0.0;
    double noise_term = 0.0;
    double total_mse = 0.0;
    double variance_se = 0.0;
    double bias_se = 0.0;
    double noise_se = 0.0;
    double total_se = 0.0;
    double closure_se = 0.0;  // standard error of total - (variance + bias + noise)
    Eigen::Index replicates = 0;
    bool budget_warning = false;
    std::string warning;
};

BiasVarianceEstimate monte_carlo_bias_variance(const LinearGenerator& generator, const Pipeline& pipeline,
                                               const MonteCarloOptions& options);

/// Two pipelines fitted on the same training sets and scored on the same
/// evaluation draws. Differences are b minus a.
struct PairedEstimate {
    BiasVarianceEstimate a;
    BiasVarianceEstimate b;
    double delta_variance = 0.0;
    double delta_variance_se = 0.0;
    double delta_bias = 0.0;
    double delta_bias_se = 0.0;
    double delta_total = 0.0;
    double delta_total_se = 0.0;
};

PairedEstimate compare_pipelines(const LinearGenerator& generator, const Pipeline& a, const Pipeline& b,
                                 const MonteCarloOptions& options);

struct CoefficientCovarianceReport {
    double max_relative_deviation = 0.0;
    Eigen::Index entries_compared = 0;
    Eigen::MatrixXd empirical;
    Eigen::MatrixXd theoretical;  // sigma^2 / (n - 1) * inverse sample covariance
};

/// Fixed design: `design` is centered once and reused; only the noise is
/// redrawn. Entries whose theoretical magnitude is at most 1e-6 are skipped.
CoefficientCovarianceReport coefficient_covariance_check(const Eigen::MatrixXd& design,
                                                         const Eigen::VectorXd& coefficients, double sigma,
                                                         Eigen::Index replicates, std::uint64_t seed);

/// Draws the fixed design from `generator` and checks task 0.
CoefficientCovarianceReport coefficient_covariance_check(const LinearGenerator& generator, Eigen::Index n_train,
                                                         Eigen::Index replicates, std::uint64_t seed);

/// Single-task model on `task` against the model trained on the mean of
/// `cluster`, both on all D features.
struct DeltaMseReport {
    double delta_variance = 0.0;  // single - aggregated
    double delta_variance_theory = 0.0;
    double delta_variance_se = 0.0;
    double delta_bias = 0.0;      // aggregated - single
    double delta_bias_theory = 0.0;
    double delta_bias_se = 0.0;
    bool variance_pass = false;
    bool bias_pass = false;
    Eigen::Index replicates = 0;
    bool pass() const { return variance_pass && bias_pass; }
};

DeltaMseReport delta_mse_check(const LinearGenerator& generator, const Cluster& cluster, std::size_t task,
                               const MonteCarloOptions& options, Eigen::Index n_pop = 100000);

/// Population R^2 of the signal of `task` on the aggregated inputs and the
/// signal variance, from n_pop fresh draws.
struct PopulationFit {
    double var_f = 0.0;
    double r2 = 0.0;
    double bias = 0.0;  // var_f * (1 - r2)
    double bias_se = 0.0;
};

PopulationFit population_fit(const LinearGenerator& generator, std::size_t task, const Partition& features,
                             Eigen::Index n_pop, std::uint64_t seed);

}  // namespace taskagg
