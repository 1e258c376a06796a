#pragma once

#include "taskagg/dataset.hpp"
#include "taskagg/linstats.hpp"
#include "taskagg/result.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace taskagg {

struct AggregationOptions {
    CandidateMean candidate_mean = CandidateMean::Pairwise;
};

/// Merge test for two targets fitted on the same design matrix. `y_ag` is
/// the aggregate column; the three-argument form uses (y_P + y_j) / 2.
ThresholdReport compute_threshold_targets(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_P,
                                          const Eigen::VectorXd& y_j, double epsilon1);

ThresholdReport compute_threshold_targets(const LeastSquares& X, const Eigen::VectorXd& y_P,
                                          const Eigen::VectorXd& y_j, const Eigen::VectorXd& y_ag,
                                          double epsilon1);

/// Homogeneous-feature form: each model is fitted on its own design matrix.
/// The factor D is the common column count of the three designs.
ThresholdReport compute_threshold_targets(const Eigen::MatrixXd& X_P, const Eigen::MatrixXd& X_j,
                                          const Eigen::MatrixXd& X_ag, const Eigen::VectorXd& y_P,
                                          const Eigen::VectorXd& y_j, const Eigen::VectorXd& y_ag,
                                          double epsilon1);

/// Merge test for two input columns. R_sep is the R^2 of y on X_curr and
/// R_aggr the R^2 after columns p and j are replaced by
/// (p_weight * x_p + x_j) / (p_weight + 1). Throws NumericalError for a
/// constant y.
ThresholdReport compute_threshold_features(const Eigen::MatrixXd& X_curr, const Eigen::VectorXd& y,
                                           Eigen::Index p, Eigen::Index j, double epsilon2,
                                           double p_weight = 1.0);

/// Evaluates every column-pair replacement against one factorization of the
/// design. Full-rank designs use a rank-one constrained-least-squares update
/// per query; rank-deficient designs refit the reduced matrix directly.
class ColumnMergeEvaluator {
public:
    ColumnMergeEvaluator(Eigen::MatrixXd design, Eigen::VectorXd y);

    double r2() const { return r2_; }
    double residual_variance() const { return var_res_; }
    double target_variance() const { return var_y_; }
    bool full_rank() const { return full_rank_; }

    ThresholdReport evaluate(Eigen::Index p, Eigen::Index j, double epsilon, double p_weight = 1.0) const;

private:
    Eigen::MatrixXd design_;
    Eigen::VectorXd y_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    Eigen::VectorXd coefficients_;
    Eigen::VectorXd residuals_;
    Eigen::RowVectorXd ones_q_;  // 1^T Q over the first d columns of Q
    double r2_ = 0.0;
    double var_res_ = 0.0;
    double var_y_ = 0.0;
    bool full_rank_ = false;
};

/// Differences below this magnitude are reported as zero gap.
inline constexpr double kGapFloor = 1e-12;

/// Hooks the loop calls while growing a cluster.
class MergeTester {
public:
    virtual ~MergeTester() = default;
    virtual void open(std::size_t cluster_id, std::size_t first) = 0;
    virtual ThresholdReport test(std::size_t cluster_id, const Cluster& members, std::size_t candidate) = 0;
    virtual void accept(std::size_t candidate) = 0;
    virtual void close(const Cluster& members) = 0;
};

struct LoopOutput {
    Partition partition;
    std::vector<ThresholdReport> trace;
};

/// Greedy double loop: each unvisited item opens a cluster and every later
/// unvisited item is tested against it once. `items` fixes the visiting
/// order and must be a permutation of {0, ..., items.size()-1}.
LoopOutput aggregation_loop(const std::vector<std::size_t>& items, MergeTester& tester);

/// Target loop over the shared design `X` (phase 1).
LoopOutput aggregate_targets(const Eigen::MatrixXd& X, const Eigen::MatrixXd& targets,
                             const std::vector<std::size_t>& order, double epsilon1,
                             const AggregationOptions& options = {});

/// Feature loop against a fixed target (phase 2). Features are visited in
/// index order.
LoopOutput aggregate_features(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double epsilon2,
                              const AggregationOptions& options = {});

/// Target loop where every task carries its own feature slab.
LoopOutput aggregate_targets_homogeneous(const std::vector<Eigen::MatrixXd>& slabs,
                                         const Eigen::MatrixXd& targets,
                                         const std::vector<std::size_t>& order, double epsilon,
                                         const AggregationOptions& options = {});

/// Seeded permutation of {0, ..., count-1}.
std::vector<std::size_t> shuffled_order(std::size_t count, std::uint64_t seed);

/// Two-phase run on a centered dataset with shared features.
AggregationResult nonlin_ctfa(const Dataset& dataset, double epsilon1, double epsilon2, std::uint64_t seed,
                              const AggregationOptions& options = {});

/// Single-phase run on a centered dataset with per-task feature slabs.
/// Feature partitions are singletons.
AggregationResult nonlin_ctfa_homogeneous(const Dataset& dataset, double epsilon, std::uint64_t seed,
                                          const AggregationOptions& options = {});

struct ReplayMismatch {
    std::size_t index = 0;  // position in the trace
    bool recorded = false;
    bool replayed = false;
    double recorded_statistic = 0.0;
    double replayed_statistic = 0.0;
};

/// Re-evaluates every trace record from scratch with direct refits and
/// reports the records whose decision differs.
std::vector<ReplayMismatch> replay(const Dataset& dataset, const AggregationResult& result);

}  // namespace taskagg
