#include "taskagg/generator.hpp"

#include "taskagg/error.hpp"

#include <cmath>
#include <string>

namespace taskagg {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

Eigen::MatrixXd standard_normal(Eigen::Index n, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(n, cols);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) z(r, c) = normal(rng);
    }
    return z;
}

void validate_correlation(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw ValidationError("correlation matrix must be square");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (std::abs(m(i, i) - 1.0) > 1e-10) {
            throw ValidationError("correlation matrix diagonal entry " + std::to_string(i) + " is not 1");
        }
        for (Eigen::Index j = 0; j < i; ++j) {
            if (!std::isfinite(m(i, j)) || std::abs(m(i, j) - m(j, i)) > 1e-10) {
                throw ValidationError("correlation matrix is not symmetric");
            }
        }
    }
    if (m.rows() == 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
        throw ValidationError("correlation matrix is not positive semidefinite");
    }
}

Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

Eigen::MatrixXd equicorrelation(Eigen::Index size, double rho) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(size, size, rho);
    m.diagonal().setOnes();
    return m;
}

NoiseModel::NoiseModel(Eigen::VectorXd sigmas, Eigen::MatrixXd correlation)
    : sigmas_(std::move(sigmas)), correlation_(std::move(correlation)) {
    if (sigmas_.size() < 1) throw ValidationError("noise model needs at least one task");
    if (correlation_.rows() != sigmas_.size()) {
        throw ValidationError("noise correlation is " + std::to_string(correlation_.rows()) + "x" +
                              std::to_string(correlation_.cols()) + " for " + std::to_string(sigmas_.size()) +
                              " tasks");
    }
    for (Eigen::Index i = 0; i < sigmas_.size(); ++i) {
        if (!(sigmas_(i) >= 0.0) || !std::isfinite(sigmas_(i))) {
            throw ValidationError("noise standard deviations must be finite and nonnegative");
        }
    }
    validate_correlation(correlation_);
    factor_ = covariance_factor(covariance());
}

NoiseModel NoiseModel::independent(Eigen::Index tasks, double sigma) {
    return NoiseModel(Eigen::VectorXd::Constant(tasks, sigma), Eigen::MatrixXd::Identity(tasks, tasks));
}

NoiseModel NoiseModel::equicorrelated(Eigen::Index tasks, double sigma, double rho) {
    return NoiseModel(Eigen::VectorXd::Constant(tasks, sigma), equicorrelation(tasks, rho));
}

Eigen::MatrixXd NoiseModel::covariance() const {
    return sigmas_.asDiagonal() * correlation_ * sigmas_.asDiagonal();
}

Eigen::MatrixXd NoiseModel::draw(Eigen::Index n, std::mt19937_64& rng) const {
    return standard_normal(n, tasks(), rng) * factor_.transpose();
}

LinearGenerator::LinearGenerator(Eigen::MatrixXd coefficients, NoiseModel noise, Eigen::MatrixXd feature_covariance)
    : coefficients_(std::move(coefficients)), noise_(std::move(noise)),
      feature_covariance_(std::move(feature_covariance)) {
    const Eigen::Index D = coefficients_.rows();
    if (D < 1 || coefficients_.cols() < 1) throw ValidationError("generator needs at least one feature and task");
    if (noise_.tasks() != coefficients_.cols()) {
        throw ValidationError("noise model covers " + std::to_string(noise_.tasks()) + " tasks, coefficients " +
                              std::to_string(coefficients_.cols()));
    }
    if (feature_covariance_.size() == 0) feature_covariance_ = Eigen::MatrixXd::Identity(D, D);
    if (feature_covariance_.rows() != D || feature_covariance_.cols() != D) {
        throw ValidationError("feature covariance must be D x D");
    }
    if (!feature_covariance_.isApprox(feature_covariance_.transpose(), 1e-12)) {
        throw ValidationError("feature covariance is not symmetric");
    }
    identity_features_ = feature_covariance_ == Eigen::MatrixXd::Identity(D, D);
    feature_factor_ = covariance_factor(feature_covariance_);
}

Eigen::MatrixXd LinearGenerator::draw_features(Eigen::Index n, std::mt19937_64& rng) const {
    Eigen::MatrixXd z = standard_normal(n, features(), rng);
    if (identity_features_) return z;
    return z * feature_factor_.transpose();
}

LinearGenerator::Sample LinearGenerator::draw(Eigen::Index n, std::mt19937_64& rng) const {
    Sample s;
    s.features = draw_features(n, rng);
    s.signal = s.features * coefficients_;
    s.targets = s.signal + noise_.draw(n, rng);
    return s;
}

}  // namespace taskagg
