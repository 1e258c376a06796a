#pragma once

#include "taskagg/generator.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace taskagg {

struct CheckReport {
    std::string check;
    double theoretical = 0.0;
    double empirical = 0.0;
    double standard_error = 0.0;
    bool pass = false;
    Eigen::Index replicates = 0;
    std::string detail;
};

nlohmann::json to_json(const CheckReport& report);

struct VerifyBudget {
    Eigen::Index replicates = 500;
    Eigen::Index covariance_replicates = 2000;
    Eigen::Index n_eval = 10000;
    Eigen::Index n_pop = 100000;
    Eigen::Index draws = 50;
    std::uint64_t seed = 20240601;
    unsigned jobs = 1;
};

const std::vector<std::string>& available_checks();

/// Runs one named check. Throws ValidationError for an unknown name.
CheckReport run_check(const std::string& name, const VerifyBudget& budget);

std::vector<CheckReport> run_checks(const std::vector<std::string>& names, const VerifyBudget& budget);

/// Expected test error of two models on one task scored on common draws.
struct PairedMse {
    double mse_a = 0.0;
    double mse_b = 0.0;
    double difference = 0.0;  // b - a
    double difference_se = 0.0;
};

/// Two tasks on a random generator are tested for merging on one training
/// sample. When accepted, the expected test error of the merged model is
/// compared with the single-task model for each member over fresh training
/// sets.
struct TargetMergeTrial {
    bool accepted = false;
    double threshold1 = 0.0;
    double threshold2 = 0.0;
    std::vector<PairedMse> members;  // single (a) vs merged (b), filled when accepted
    bool not_worse = true;           // every member within 3 standard errors
};

struct TargetTrialConfig {
    Eigen::Index features = 20;
    Eigen::Index n_train = 100;
    double sigma = 3.0;
    bool orthogonal = false;  // coefficients supported on disjoint halves of the features
    double epsilon = 0.0;
    Eigen::Index replicates = 200;
    Eigen::Index n_eval = 10000;
};

TargetMergeTrial target_merge_trial(const TargetTrialConfig& config, std::uint64_t seed);

/// Feature loop at the given epsilon on a design with duplicated columns,
/// scored against the full-feature model on fresh data.
struct FeatureMergeTrial {
    std::size_t merges = 0;     // accepted comparisons
    std::size_t features = 0;   // reduced feature count
    PairedMse mse;              // full (a) vs reduced (b)
    bool not_worse = true;
};

struct FeatureTrialConfig {
    Eigen::Index base_features = 6;
    Eigen::Index duplicates = 3;
    Eigen::Index n_train = 100;
    double sigma = 1.0;
    double epsilon = 0.0;
    Eigen::Index n_pop = 100000;
};

FeatureMergeTrial feature_merge_trial(const FeatureTrialConfig& config, std::uint64_t seed);

/// y = x_p - x_j plus small noise; returns the merge test of columns p and j.
struct CounterexampleOutcome {
    double r_sep = 0.0;
    double r_aggr = 0.0;
    double gap = 0.0;
    bool accepted = false;
};

CounterexampleOutcome antisymmetric_counterexample(double epsilon, std::uint64_t seed, Eigen::Index n = 500,
                                                   Eigen::Index features = 5, double noise = 0.05);

}  // namespace taskagg
