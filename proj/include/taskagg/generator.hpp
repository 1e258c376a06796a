#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace taskagg {

/// Seeded engine for stream `stream` of a run seeded with `seed`. Distinct
/// streams of one seed are independent for practical purposes.
std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0);

/// n x cols matrix of i.i.d. standard normal draws, filled row by row.
Eigen::MatrixXd standard_normal(Eigen::Index n, Eigen::Index cols, std::mt19937_64& rng);

/// Joint Gaussian noise of K tasks: standard deviations and a correlation
/// matrix (symmetric, PSD, unit diagonal).
class NoiseModel {
public:
    NoiseModel() = default;
    NoiseModel(Eigen::VectorXd sigmas, Eigen::MatrixXd correlation);

    static NoiseModel independent(Eigen::Index tasks, double sigma);
    static NoiseModel equicorrelated(Eigen::Index tasks, double sigma, double rho);

    const Eigen::VectorXd& sigmas() const { return sigmas_; }
    const Eigen::MatrixXd& correlation() const { return correlation_; }
    Eigen::MatrixXd covariance() const;
    Eigen::Index tasks() const { return sigmas_.size(); }

    /// n x K draws.
    Eigen::MatrixXd draw(Eigen::Index n, std::mt19937_64& rng) const;

private:
    Eigen::VectorXd sigmas_;
    Eigen::MatrixXd correlation_;
    Eigen::MatrixXd factor_;  // factor_ * factor_^T == covariance()
};

/// Throws ValidationError unless `m` is a symmetric PSD matrix with unit
/// diagonal (within 1e-10).
void validate_correlation(const Eigen::MatrixXd& m);

/// Square-root factor A with A A^T = cov. Uses Cholesky when positive
/// definite and the symmetric eigendecomposition otherwise.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov);

/// Equicorrelated covariance: unit variances, off-diagonal `rho`.
Eigen::MatrixXd equicorrelation(Eigen::Index size, double rho);

/// y_t = x^T w_t + e_t with Gaussian x ~ N(0, feature_covariance) and
/// noise from `noise`. Coefficients are D x L.
class LinearGenerator {
public:
    LinearGenerator(Eigen::MatrixXd coefficients, NoiseModel noise,
                    Eigen::MatrixXd feature_covariance = Eigen::MatrixXd());

    const Eigen::MatrixXd& coefficients() const { return coefficients_; }
    const NoiseModel& noise() const { return noise_; }
    const Eigen::MatrixXd& feature_covariance() const { return feature_covariance_; }
    Eigen::Index features() const { return coefficients_.rows(); }
    Eigen::Index tasks() const { return coefficients_.cols(); }

    Eigen::MatrixXd draw_features(Eigen::Index n, std::mt19937_64& rng) const;

    struct Sample {
        Eigen::MatrixXd features;  // n x D
        Eigen::MatrixXd signal;    // n x L, noiseless
        Eigen::MatrixXd targets;   // signal + noise
    };
    Sample draw(Eigen::Index n, std::mt19937_64& rng) const;

private:
    Eigen::MatrixXd coefficients_;
    NoiseModel noise_;
    Eigen::MatrixXd feature_covariance_;
    Eigen::MatrixXd feature_factor_;
    bool identity_features_ = true;
};

}  // namespace taskagg
