#pragma once

#include "taskagg/dataset.hpp"
#include "taskagg/generator.hpp"
#include "taskagg/result.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace taskagg {

struct CoefficientInterval {
    double low = 0.0;
    double high = 0.0;
};

/// Synthetic linear multi-task benchmark. Every coefficient of a task is
/// drawn uniformly from the interval of the task's group.
struct SynthConfig {
    Eigen::Index tasks = 10;
    Eigen::Index features = 100;
    Eigen::Index n_train = 250;
    Eigen::Index n_test = 250;
    double sigma = 10.0;
    Eigen::MatrixXd noise_correlation;  // empty means identity
    std::vector<CoefficientInterval> intervals{{-1.0, -0.5}, {0.5, 1.0}};
    std::vector<std::size_t> task_groups;  // empty means an even split, extra task to group 0
    double feature_correlation = 0.0;      // common correlation of the Gaussian features
    std::size_t n_repeats = 10;
    double epsilon1 = 0.0;
    double epsilon2 = 1e-4;
    CandidateMean candidate_mean = CandidateMean::Pairwise;

    /// Ten tasks, 100 features, 250 train and test samples, sigma 10, with
    /// the feature correlation calibrated for an expected single-task test
    /// R^2 of 0.48.
    static SynthConfig reference();

    /// Throws ValidationError on an invalid configuration.
    void validate() const;

    std::vector<std::size_t> groups() const;
    NoiseModel noise_model() const;
};

/// Ground truth of one generated benchmark.
struct SyntheticTask {
    Eigen::MatrixXd coefficients;  // D x L
    Eigen::MatrixXd train_noise;   // n_train x L
    Eigen::MatrixXd test_noise;    // n_test x L
    std::vector<std::size_t> groups;

    Eigen::MatrixXd signal(const Eigen::MatrixXd& features) const { return features * coefficients; }
};

struct SynthData {
    Dataset train;
    Dataset test;
    SyntheticTask truth;
};

/// Keys mirror the field names; `intervals` is a list of [low, high] pairs
/// and `noise_correlation` a list of rows. Missing keys keep the values of
/// `base`; unknown keys are a validation error.
SynthConfig synth_config_from_json(const nlohmann::json& j, const SynthConfig& base = {});
nlohmann::json to_json(const SynthConfig& config);

SynthData generate(const SynthConfig& config, std::uint64_t seed);

LinearGenerator make_generator(const SynthConfig& config, const Eigen::MatrixXd& coefficients);

/// Large-sample approximation of the mean single-task OLS test R^2.
double expected_single_task_r2(const SynthConfig& config);

/// Feature correlation giving the requested expected single-task test R^2.
double calibrate_feature_correlation(const SynthConfig& config, double target_r2);

struct RunMetrics {
    double single_mse = 0.0;
    double phase1_mse = 0.0;
    double phase12_mse = 0.0;
    double single_r2 = 0.0;
    double phase1_r2 = 0.0;
    double phase12_r2 = 0.0;
    double phase1_change_pct = 0.0;
    double phase12_change_pct = 0.0;
    double clusters = 0.0;
    double reduced_features = 0.0;  // mean over task clusters
};

/// Generates one benchmark, runs the two-phase aggregation on the centered
/// train split and scores single-task, task-aggregated and fully reduced
/// OLS models per original task on the test split.
RunMetrics evaluate_run(const SynthConfig& config, std::uint64_t seed, AggregationResult* result = nullptr);

/// Scores a given aggregation result; `train` and `test` must be centered.
RunMetrics score_result(const Dataset& train, const Dataset& test, const AggregationResult& result);

struct SweepRow {
    std::string axis;
    double value = 0.0;
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    std::size_t repeats = 0;
};

/// Metric names in table order.
const std::vector<std::string>& sweep_metrics();

/// Canonical axis name, or ValidationError for an unknown axis.
std::string canonical_axis(const std::string& axis);

SynthConfig with_axis_value(const SynthConfig& base, const std::string& axis, double value);

/// One row per (value, metric): mean and sample standard deviation over
/// seeds base_seed, ..., base_seed + n_repeats - 1.
std::vector<SweepRow> sweep(const SynthConfig& base, const std::string& axis, const std::vector<double>& values,
                            std::uint64_t base_seed = 0, unsigned jobs = 1);

/// Per-seed metrics for every value, in value-major order.
std::vector<std::vector<RunMetrics>> sweep_runs(const SynthConfig& base, const std::string& axis,
                                                const std::vector<double>& values, std::uint64_t base_seed = 0,
                                                unsigned jobs = 1);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace taskagg
