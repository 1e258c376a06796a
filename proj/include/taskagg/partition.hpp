#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace taskagg {

using Cluster = std::vector<std::size_t>;

// Disjoint cover of {0, ..., universe-1}. Cluster order is creation order;
// members inside a cluster are kept sorted ascending.
class Partition {
public:
    Partition() = default;

    // Throws ValidationError unless the clusters are non-empty, pairwise
    // disjoint and cover the universe exactly.
    Partition(std::vector<Cluster> clusters, std::size_t universe);

    static Partition singletons(std::size_t universe);
    static Partition single_cluster(std::size_t universe);

    const std::vector<Cluster>& clusters() const { return clusters_; }
    const Cluster& operator[](std::size_t i) const { return clusters_[i]; }
    std::size_t size() const { return clusters_.size(); }
    std::size_t universe() const { return universe_; }

    // Index of the cluster that contains `item`.
    std::size_t cluster_of(std::size_t item) const;

    friend bool operator==(const Partition&, const Partition&) = default;

private:
    std::vector<Cluster> clusters_;
    std::size_t universe_ = 0;
};

// Column-wise flat mean of `columns` over each cluster: result has one
// column per cluster.
Eigen::MatrixXd aggregate_columns(const Eigen::MatrixXd& columns, const Partition& partition);

// Flat mean of the selected columns.
Eigen::VectorXd mean_of_columns(const Eigen::MatrixXd& columns, const Cluster& members);

struct TaskPartition {
    Partition partition;
    Eigen::MatrixXd aggregated_targets;  // n x l
};

struct FeaturePartition {
    Partition partition;
    Eigen::MatrixXd aggregated_features;  // n x d
};

}  // namespace taskagg
