#include "taskagg/partition.hpp"

#include "taskagg/error.hpp"

#include <algorithm>
#include <string>

namespace taskagg {

Partition::Partition(std::vector<Cluster> clusters, std::size_t universe)
    : clusters_(std::move(clusters)), universe_(universe) {
    std::vector<bool> seen(universe_, false);
    std::size_t covered = 0;
    for (auto& cluster : clusters_) {
        if (cluster.empty()) throw ValidationError("partition contains an empty cluster");
        std::sort(cluster.begin(), cluster.end());
        for (std::size_t item : cluster) {
            if (item >= universe_) {
                throw ValidationError("partition index " + std::to_string(item) +
                                      " out of range [0, " + std::to_string(universe_) + ")");
            }
            if (seen[item]) {
                throw ValidationError("partition index " + std::to_string(item) +
                                      " appears in more than one cluster");
            }
            seen[item] = true;
            ++covered;
        }
    }
    if (covered != universe_) {
        throw ValidationError("partition covers " + std::to_string(covered) + " of " +
                              std::to_string(universe_) + " items");
    }
}

Partition Partition::singletons(std::size_t universe) {
    std::vector<Cluster> clusters(universe);
    for (std::size_t i = 0; i < universe; ++i) clusters[i] = {i};
    return Partition(std::move(clusters), universe);
}

Partition Partition::single_cluster(std::size_t universe) {
    Cluster all(universe);
    for (std::size_t i = 0; i < universe; ++i) all[i] = i;
    return Partition({std::move(all)}, universe);
}

std::size_t Partition::cluster_of(std::size_t item) const {
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
        if (std::binary_search(clusters_[c].begin(), clusters_[c].end(), item)) return c;
    }
    throw ValidationError("item " + std::to_string(item) + " not in partition");
}

Eigen::VectorXd mean_of_columns(const Eigen::MatrixXd& columns, const Cluster& members) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(columns.rows());
    for (std::size_t k : members) sum += columns.col(static_cast<Eigen::Index>(k));
    return sum / static_cast<double>(members.size());
}

Eigen::MatrixXd aggregate_columns(const Eigen::MatrixXd& columns, const Partition& partition) {
    if (static_cast<std::size_t>(columns.cols()) != partition.universe()) {
        throw ValidationError("partition over " + std::to_string(partition.universe()) +
                              " items applied to " + std::to_string(columns.cols()) + " columns");
    }
    Eigen::MatrixXd out(columns.rows(), static_cast<Eigen::Index>(partition.size()));
    for (std::size_t c = 0; c < partition.size(); ++c) {
        out.col(static_cast<Eigen::Index>(c)) = mean_of_columns(columns, partition[c]);
    }
    return out;
}

}  // namespace taskagg
