#pragma once

#include "taskagg/partition.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace taskagg {

/// Shared feature matrix (n x D), target matrix (n x L) and, for the
/// homogeneous variant, one n x D feature slab per task.
///
/// Immutable once constructed. The constructor enforces finiteness, n >= 2,
/// at least one target, at least one feature (shared or per task) and equal
/// slab shapes.
class Dataset {
public:
    Dataset(Eigen::MatrixXd features, Eigen::MatrixXd targets,
            std::vector<std::string> feature_names = {},
            std::vector<std::string> target_names = {},
            std::vector<Eigen::MatrixXd> per_task_features = {});

    const Eigen::MatrixXd& features() const { return features_; }
    const Eigen::MatrixXd& targets() const { return targets_; }
    const std::vector<Eigen::MatrixXd>& per_task_features() const { return per_task_features_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    const std::vector<std::string>& target_names() const { return target_names_; }

    bool has_per_task_features() const { return !per_task_features_.empty(); }
    bool has_shared_features() const { return features_.cols() > 0; }

    Eigen::Index samples() const { return targets_.rows(); }
    Eigen::Index feature_count() const;
    Eigen::Index task_count() const { return targets_.cols(); }

private:
    Eigen::MatrixXd features_;
    Eigen::MatrixXd targets_;
    std::vector<Eigen::MatrixXd> per_task_features_;
    std::vector<std::string> feature_names_;
    std::vector<std::string> target_names_;
};

enum class ColumnRole { Feature, Target, Ignore, TaskFeature };

struct ColumnSpec {
    ColumnRole role = ColumnRole::Feature;
    std::string task;     // TaskFeature only: owning target column
    std::string feature;  // TaskFeature only: shared feature name
};

/// Maps CSV header names to roles. Columns not listed take `fallback`; with
/// no fallback an unlisted column is a validation error.
struct Schema {
    std::map<std::string, ColumnSpec> columns;
    std::optional<ColumnRole> fallback;

    /// Named targets; every other column is a shared feature unless ignored.
    static Schema targets_rest_features(const std::vector<std::string>& targets,
                                        const std::vector<std::string>& ignore = {});

    /// Named targets; every column "<feature>@<target>" is that target's
    /// measurement of <feature>. Other columns are ignored.
    static Schema homogeneous(const std::vector<std::string>& targets,
                              const std::vector<std::string>& header);
};

std::vector<std::string> read_csv_header(const std::filesystem::path& path);

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);

/// Writes shared features, then per-task feature columns ("<feature>@<target>"),
/// then targets. Values use shortest round-trip formatting.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

struct ColumnMeans {
    Eigen::VectorXd features;
    Eigen::VectorXd targets;
    std::vector<Eigen::VectorXd> per_task_features;
};

struct Centered {
    Dataset data;
    ColumnMeans means;
    std::vector<std::string> constant_columns;
};

/// Subtracts column means. Constant columns become exactly zero and are
/// listed in `constant_columns`.
Centered center(const Dataset& dataset);

/// Centers with externally supplied means (test rows use the train means).
Dataset center_with(const Dataset& dataset, const ColumnMeans& means);

struct AggregationResult;

struct ReducedTask {
    Cluster tasks;
    Eigen::VectorXd target;    // mean of member targets
    Eigen::MatrixXd features;  // one column per feature cluster
};

/// Materialises the reduced datasets described by `result`.
std::vector<ReducedTask> apply_partition(const Dataset& dataset, const AggregationResult& result);

}  // namespace taskagg
