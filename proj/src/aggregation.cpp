#include "taskagg/aggregation.hpp"

#include "taskagg/error.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <random>

namespace taskagg {

namespace {

// Relative variance below which an aggregate target counts as constant.
constexpr double kDegenerateVariance = 1e-24;

double explained(const OlsFit& f) { return f.target_variance - f.residual_variance; }

ThresholdReport target_report(const OlsFit& P, const OlsFit& j, const OlsFit& ag, Eigen::Index D, double eps) {
    ThresholdReport r;
    r.phase = 1;
    r.epsilon = eps;
    r.var_P = P.residual_variance;
    r.var_j = j.residual_variance;
    r.var_ag = ag.residual_variance;

    const double scale = std::max({P.target_variance, j.target_variance, ag.target_variance});
    auto constant = [&](const OlsFit& f) { return !(f.target_variance > kDegenerateVariance * scale); };
    if (constant(P) || constant(j) || constant(ag)) {
        r.diagnostic = constant(ag) && !constant(P) && !constant(j)
                           ? "aggregate target has zero variance"
                           : "target has zero variance";
        r.accepted = false;
        return r;
    }

    r.r_P = P.r2;
    r.r_j = j.r2;
    r.r_ag = ag.r2;
    r.varf_P = explained(P);
    r.varf_j = explained(j);
    r.varf_ag = explained(ag);

    const double factor = static_cast<double>(D) / static_cast<double>(P.n - 1);
    const double bias_part = 0.5 * (r.r_P * r.varf_P + r.r_j * r.varf_j) - r.r_ag * r.varf_ag;
    r.threshold1 = factor * (r.var_ag - r.var_P) + bias_part;
    r.threshold2 = factor * (r.var_ag - r.var_j) + bias_part;
    r.accepted = r.threshold1 <= eps && r.threshold2 <= eps;
    return r;
}

void require_rows(Eigen::Index rows, const Eigen::VectorXd& v, const char* what) {
    if (v.size() != rows) {
        throw ValidationError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                              std::to_string(rows));
    }
}

Eigen::VectorXd flat_mean_with(const Eigen::MatrixXd& columns, const Cluster& members, std::size_t extra) {
    Cluster all = members;
    all.push_back(extra);
    return mean_of_columns(columns, all);
}

Eigen::MatrixXd mean_slab(const std::vector<Eigen::MatrixXd>& slabs, const Cluster& members) {
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(slabs.front().rows(), slabs.front().cols());
    for (std::size_t k : members) sum += slabs[k];
    return sum / static_cast<double>(members.size());
}

// Column formed from the running mean and the candidate.
template <typename Value>
Value candidate_column(const Value& running, const Value& candidate, std::size_t cluster_size,
                       CandidateMean mode) {
    if (mode == CandidateMean::Pairwise || cluster_size == 1) return (running + candidate) / 2.0;
    const double k = static_cast<double>(cluster_size);
    return (k * running + candidate) / (k + 1.0);
}

double candidate_weight(std::size_t cluster_size, CandidateMean mode) {
    return mode == CandidateMean::Pairwise ? 1.0 : static_cast<double>(cluster_size);
}

// Design of the feature loop at one step: the running mean of the open
// cluster, every unassigned column, then the means of finished clusters.
struct WorkingDesign {
    Eigen::MatrixXd matrix;
    std::vector<Eigen::Index> column_of;  // original feature -> column, -1 when absent
};

WorkingDesign working_design(const Eigen::MatrixXd& X, const Cluster& members,
                             const std::vector<bool>& assigned, const std::vector<Eigen::VectorXd>& finished) {
    const auto D = static_cast<std::size_t>(X.cols());
    std::vector<std::size_t> free_cols;
    for (std::size_t f = 0; f < D; ++f) {
        if (!assigned[f]) free_cols.push_back(f);
    }
    WorkingDesign w;
    w.column_of.assign(D, -1);
    w.matrix.resize(X.rows(), static_cast<Eigen::Index>(1 + free_cols.size() + finished.size()));
    w.matrix.col(0) = mean_of_columns(X, members);
    Eigen::Index c = 1;
    for (std::size_t f : free_cols) {
        w.column_of[f] = c;
        w.matrix.col(c++) = X.col(static_cast<Eigen::Index>(f));
    }
    for (const auto& m : finished) w.matrix.col(c++) = m;
    return w;
}

double snap(double gap) { return std::abs(gap) < kGapFloor ? 0.0 : gap; }

ThresholdReport feature_report(double r2_sep, double var_sep, double gap, double var_y, double eps) {
    ThresholdReport r;
    r.phase = 2;
    r.epsilon = eps;
    r.r_P = r2_sep;
    r.r_ag = r2_sep - gap;
    r.var_P = var_sep;
    r.var_ag = var_sep + gap * var_y;
    r.varf_P = var_y - r.var_P;
    r.varf_ag = var_y - r.var_ag;
    r.r_gap = gap;
    r.accepted = gap <= eps;
    return r;
}

ThresholdReport constant_target_report(double eps) {
    ThresholdReport r;
    r.phase = 2;
    r.epsilon = eps;
    r.accepted = false;
    r.diagnostic = "target has zero variance";
    return r;
}

Eigen::MatrixXd replace_pair(const Eigen::MatrixXd& X, Eigen::Index p, Eigen::Index j, double w) {
    Eigen::MatrixXd out(X.rows(), X.cols() - 1);
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        if (k == j) continue;
        out.col(c++) = k == p ? Eigen::VectorXd((w * X.col(p) + X.col(j)) / (w + 1.0)) : Eigen::VectorXd(X.col(k));
    }
    return out;
}

// R^2 gap computed by refitting the reduced design.
double direct_gap(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::Index p, Eigen::Index j, double w,
                  const OlsFit& full) {
    const OlsFit reduced = ols_fit(replace_pair(X, p, j, w), y);
    return snap((reduced.residual_variance - full.residual_variance) / full.target_variance);
}

void check_pair(Eigen::Index d, Eigen::Index p, Eigen::Index j) {
    if (p < 0 || j < 0 || p >= d || j >= d) {
        throw ValidationError("column pair (" + std::to_string(p) + ", " + std::to_string(j) + ") out of range for " +
                              std::to_string(d) + " columns");
    }
    if (p == j) throw ValidationError("column pair must name two different columns");
}

class TargetTester : public MergeTester {
public:
    TargetTester(const Eigen::MatrixXd& X, const Eigen::MatrixXd& targets, double eps, CandidateMean mode)
        : ls_(X), targets_(targets), eps_(eps), mode_(mode) {}

    void open(std::size_t, std::size_t first) override {
        members_ = {first};
        refresh();
    }

    ThresholdReport test(std::size_t cluster_id, const Cluster& members, std::size_t candidate) override {
        const Eigen::VectorXd y_j = targets_.col(static_cast<Eigen::Index>(candidate));
        const Eigen::VectorXd y_ag = candidate_column(y_P_, y_j, members.size(), mode_);
        ThresholdReport r = target_report(fit_P_, ls_.fit(y_j), ls_.fit(y_ag), ls_.cols(), eps_);
        r.cluster_id = cluster_id;
        r.candidate = candidate;
        r.members = members;
        r.flat_mean_gap = (y_ag - flat_mean_with(targets_, members, candidate)).cwiseAbs().maxCoeff();
        return r;
    }

    void accept(std::size_t candidate) override {
        members_.push_back(candidate);
        refresh();
    }

    void close(const Cluster&) override {}

private:
    void refresh() {
        y_P_ = mean_of_columns(targets_, members_);
        fit_P_ = ls_.fit(y_P_);
    }

    LeastSquares ls_;
    const Eigen::MatrixXd& targets_;
    double eps_;
    CandidateMean mode_;
    Cluster members_;
    Eigen::VectorXd y_P_;
    OlsFit fit_P_;
};

class SlabTester : public MergeTester {
public:
    SlabTester(const std::vector<Eigen::MatrixXd>& slabs, const Eigen::MatrixXd& targets, double eps,
               CandidateMean mode)
        : slabs_(slabs), targets_(targets), eps_(eps), mode_(mode) {}

    void open(std::size_t, std::size_t first) override {
        members_ = {first};
        refresh();
    }

    ThresholdReport test(std::size_t cluster_id, const Cluster& members, std::size_t candidate) override {
        const Eigen::VectorXd y_j = targets_.col(static_cast<Eigen::Index>(candidate));
        const Eigen::MatrixXd& X_j = slabs_[candidate];
        const Eigen::VectorXd y_ag = candidate_column(y_P_, y_j, members.size(), mode_);
        const Eigen::MatrixXd X_ag = candidate_column(X_P_, X_j, members.size(), mode_);
        ThresholdReport r = target_report(fit_P_, ols_fit(X_j, y_j), ols_fit(X_ag, y_ag), X_P_.cols(), eps_);
        r.cluster_id = cluster_id;
        r.candidate = candidate;
        r.members = members;
        r.flat_mean_gap = (y_ag - flat_mean_with(targets_, members, candidate)).cwiseAbs().maxCoeff();
        return r;
    }

    void accept(std::size_t candidate) override {
        members_.push_back(candidate);
        refresh();
    }

    void close(const Cluster&) override {}

private:
    void refresh() {
        y_P_ = mean_of_columns(targets_, members_);
        X_P_ = mean_slab(slabs_, members_);
        fit_P_ = ols_fit(X_P_, y_P_);
    }

    const std::vector<Eigen::MatrixXd>& slabs_;
    const Eigen::MatrixXd& targets_;
    double eps_;
    CandidateMean mode_;
    Cluster members_;
    Eigen::VectorXd y_P_;
    Eigen::MatrixXd X_P_;
    OlsFit fit_P_;
};

class FeatureTester : public MergeTester {
public:
    FeatureTester(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eps, CandidateMean mode)
        : X_(X), y_(y), eps_(eps), mode_(mode), assigned_(static_cast<std::size_t>(X.cols()), false),
          constant_target_(!(sample_variance(y) > 0.0)) {}

    void open(std::size_t, std::size_t first) override {
        members_ = {first};
        assigned_[first] = true;
        refresh();
    }

    ThresholdReport test(std::size_t cluster_id, const Cluster& members, std::size_t candidate) override {
        ThresholdReport r;
        if (constant_target_) {
            r = constant_target_report(eps_);
        } else {
            const Eigen::Index j = design_.column_of[candidate];
            r = evaluator_->evaluate(0, j, eps_, candidate_weight(members.size(), mode_));
            if (mode_ == CandidateMean::Pairwise && members.size() > 1) {
                const Eigen::VectorXd tested = (design_.matrix.col(0) + design_.matrix.col(j)) / 2.0;
                r.flat_mean_gap = (tested - flat_mean_with(X_, members, candidate)).cwiseAbs().maxCoeff();
            }
        }
        r.cluster_id = cluster_id;
        r.candidate = candidate;
        r.members = members;
        return r;
    }

    void accept(std::size_t candidate) override {
        members_.push_back(candidate);
        assigned_[candidate] = true;
        refresh();
    }

    void close(const Cluster& members) override { finished_.push_back(mean_of_columns(X_, members)); }

private:
    void refresh() {
        if (constant_target_) return;
        design_ = working_design(X_, members_, assigned_, finished_);
        // The evaluator is only queried while unassigned columns remain.
        if (design_.matrix.cols() >= 2) {
            evaluator_ = std::make_unique<ColumnMergeEvaluator>(design_.matrix, y_);
        } else {
            evaluator_.reset();
        }
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& y_;
    double eps_;
    CandidateMean mode_;
    std::vector<bool> assigned_;
    bool constant_target_;
    Cluster members_;
    std::vector<Eigen::VectorXd> finished_;
    WorkingDesign design_;
    std::unique_ptr<ColumnMergeEvaluator> evaluator_;
};

void check_permutation(const std::vector<std::size_t>& items) {
    std::vector<bool> seen(items.size(), false);
    for (std::size_t i : items) {
        if (i >= items.size() || seen[i]) throw ValidationError("loop order is not a permutation");
        seen[i] = true;
    }
}

}  // namespace

ThresholdReport compute_threshold_targets(const LeastSquares& X, const Eigen::VectorXd& y_P,
                                          const Eigen::VectorXd& y_j, const Eigen::VectorXd& y_ag,
                                          double epsilon1) {
    require_rows(X.rows(), y_P, "y_P");
    require_rows(X.rows(), y_j, "y_j");
    require_rows(X.rows(), y_ag, "y_ag");
    return target_report(X.fit(y_P), X.fit(y_j), X.fit(y_ag), X.cols(), epsilon1);
}

ThresholdReport compute_threshold_targets(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_P,
                                          const Eigen::VectorXd& y_j, double epsilon1) {
    require_rows(X.rows(), y_P, "y_P");
    require_rows(X.rows(), y_j, "y_j");
    return compute_threshold_targets(LeastSquares(X), y_P, y_j, (y_P + y_j) / 2.0, epsilon1);
}

ThresholdReport compute_threshold_targets(const Eigen::MatrixXd& X_P, const Eigen::MatrixXd& X_j,
                                          const Eigen::MatrixXd& X_ag, const Eigen::VectorXd& y_P,
                                          const Eigen::VectorXd& y_j, const Eigen::VectorXd& y_ag,
                                          double epsilon1) {
    if (X_j.rows() != X_P.rows() || X_j.cols() != X_P.cols() || X_ag.rows() != X_P.rows() ||
        X_ag.cols() != X_P.cols()) {
        throw ValidationError("design matrices of the merge test differ in shape");
    }
    require_rows(X_P.rows(), y_P, "y_P");
    require_rows(X_P.rows(), y_j, "y_j");
    require_rows(X_P.rows(), y_ag, "y_ag");
    return target_report(ols_fit(X_P, y_P), ols_fit(X_j, y_j), ols_fit(X_ag, y_ag), X_P.cols(), epsilon1);
}

ColumnMergeEvaluator::ColumnMergeEvaluator(Eigen::MatrixXd design, Eigen::VectorXd y)
    : design_(std::move(design)), y_(std::move(y)) {
    const Eigen::Index n = design_.rows();
    const Eigen::Index d = design_.cols();
    require_rows(n, y_, "target");
    if (n < 2) throw ValidationError("column merge needs n >= 2");
    if (d < 2) throw ValidationError("column merge needs at least two columns");
    var_y_ = sample_variance(y_);

    qr_.compute(design_);
    full_rank_ = d <= n && qr_.rank() == d;
    if (full_rank_) {
        coefficients_ = qr_.solve(y_);
        residuals_ = y_ - design_ * coefficients_;
        const Eigen::VectorXd qt1 = qr_.householderQ().transpose() * Eigen::VectorXd::Ones(n);
        ones_q_ = qt1.head(d).transpose();
    } else {
        OlsFit fit = ols_fit(design_, y_);
        coefficients_ = std::move(fit.coefficients);
        residuals_ = std::move(fit.residuals);
    }
    var_res_ = sample_variance(residuals_);
    r2_ = var_y_ > 0.0 ? 1.0 - var_res_ / var_y_ : std::numeric_limits<double>::quiet_NaN();
}

ThresholdReport ColumnMergeEvaluator::evaluate(Eigen::Index p, Eigen::Index j, double epsilon,
                                               double p_weight) const {
    const Eigen::Index d = design_.cols();
    check_pair(d, p, j);
    if (!(p_weight > 0.0)) throw ValidationError("column weight must be positive");
    if (!(var_y_ > 0.0)) throw NumericalError("R^2 is undefined for a constant target");

    double gap = 0.0;
    if (full_rank_) {
        // Merging forces the coefficients to satisfy g^T w = 0 with
        // g = e_p - p_weight * e_j. With X P = Q R and u = R^-T P^T g the
        // constrained residual is r + Q u (g^T w) / |u|^2.
        Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
        g(p) = 1.0;
        g(j) = -p_weight;
        const Eigen::VectorXd pg = qr_.colsPermutation().transpose() * g;
        const Eigen::VectorXd u = qr_.matrixR()
                                      .topLeftCorner(d, d)
                                      .template triangularView<Eigen::Upper>()
                                      .transpose()
                                      .solve(pg);
        const double uu = u.squaredNorm();
        const double gw = g.dot(coefficients_);
        const auto n = static_cast<double>(design_.rows());
        const double mean_r = residuals_.mean();
        const double mean_shift = (ones_q_.dot(u)) * gw / uu / n;
        const double mean_new = mean_r + mean_shift;
        const double delta_ss = gw * gw / uu - n * (mean_new * mean_new - mean_r * mean_r);
        gap = snap(delta_ss / (n - 1.0) / var_y_);
    } else {
        OlsFit full;
        full.residual_variance = var_res_;
        full.target_variance = var_y_;
        gap = direct_gap(design_, y_, p, j, p_weight, full);
    }
    return feature_report(r2_, var_res_, gap, var_y_, epsilon);
}

ThresholdReport compute_threshold_features(const Eigen::MatrixXd& X_curr, const Eigen::VectorXd& y,
                                           Eigen::Index p, Eigen::Index j, double epsilon2, double p_weight) {
    ThresholdReport r = ColumnMergeEvaluator(X_curr, y).evaluate(p, j, epsilon2, p_weight);
    r.cluster_id = static_cast<std::size_t>(p);
    r.candidate = static_cast<std::size_t>(j);
    return r;
}

LoopOutput aggregation_loop(const std::vector<std::size_t>& items, MergeTester& tester) {
    if (items.empty()) throw ValidationError("aggregation loop needs at least one item");
    check_permutation(items);
    std::vector<bool> visited(items.size(), false);
    std::vector<Cluster> clusters;
    LoopOutput out;
    for (std::size_t a = 0; a < items.size(); ++a) {
        const std::size_t first = items[a];
        if (visited[first]) continue;
        visited[first] = true;
        const std::size_t cluster_id = clusters.size();
        Cluster members{first};
        tester.open(cluster_id, first);
        for (std::size_t b = a + 1; b < items.size(); ++b) {
            const std::size_t candidate = items[b];
            if (visited[candidate]) continue;
            Cluster sorted = members;
            std::sort(sorted.begin(), sorted.end());
            ThresholdReport report = tester.test(cluster_id, sorted, candidate);
            const bool accepted = report.accepted;
            out.trace.push_back(std::move(report));
            if (accepted) {
                visited[candidate] = true;
                members.push_back(candidate);
                tester.accept(candidate);
            }
        }
        std::sort(members.begin(), members.end());
        tester.close(members);
        clusters.push_back(std::move(members));
    }
    out.partition = Partition(std::move(clusters), items.size());
    return out;
}

LoopOutput aggregate_targets(const Eigen::MatrixXd& X, const Eigen::MatrixXd& targets,
                             const std::vector<std::size_t>& order, double epsilon1,
                             const AggregationOptions& options) {
    if (X.rows() != targets.rows()) throw ValidationError("features and targets differ in row count");
    if (static_cast<Eigen::Index>(order.size()) != targets.cols()) {
        throw ValidationError("task order must list every target once");
    }
    TargetTester tester(X, targets, epsilon1, options.candidate_mean);
    return aggregation_loop(order, tester);
}

LoopOutput aggregate_features(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double epsilon2,
                              const AggregationOptions& options) {
    require_rows(X.rows(), y, "target");
    std::vector<std::size_t> order(static_cast<std::size_t>(X.cols()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    FeatureTester tester(X, y, epsilon2, options.candidate_mean);
    return aggregation_loop(order, tester);
}

LoopOutput aggregate_targets_homogeneous(const std::vector<Eigen::MatrixXd>& slabs,
                                         const Eigen::MatrixXd& targets,
                                         const std::vector<std::size_t>& order, double epsilon,
                                         const AggregationOptions& options) {
    if (static_cast<Eigen::Index>(slabs.size()) != targets.cols()) {
        throw ValidationError("homogeneous aggregation needs one feature slab per target");
    }
    if (static_cast<Eigen::Index>(order.size()) != targets.cols()) {
        throw ValidationError("task order must list every target once");
    }
    SlabTester tester(slabs, targets, epsilon, options.candidate_mean);
    return aggregation_loop(order, tester);
}

std::vector<std::size_t> shuffled_order(std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

AggregationResult nonlin_ctfa(const Dataset& dataset, double epsilon1, double epsilon2, std::uint64_t seed,
                              const AggregationOptions& options) {
    if (!dataset.has_shared_features()) {
        throw ValidationError("two-phase aggregation needs shared features; use the homogeneous variant");
    }
    const auto L = static_cast<std::size_t>(dataset.task_count());
    AggregationResult result;
    result.variant = Variant::Shared;
    result.candidate_mean = options.candidate_mean;
    result.seed = seed;
    result.epsilon1 = epsilon1;
    result.epsilon2 = epsilon2;
    result.task_order = shuffled_order(L, seed);

    LoopOutput tasks = aggregate_targets(dataset.features(), dataset.targets(), result.task_order, epsilon1, options);
    result.task_partition = tasks.partition;
    result.trace = std::move(tasks.trace);

    for (std::size_t c = 0; c < result.task_partition.size(); ++c) {
        const Eigen::VectorXd psi = mean_of_columns(dataset.targets(), result.task_partition[c]);
        LoopOutput features = aggregate_features(dataset.features(), psi, epsilon2, options);
        for (auto& r : features.trace) {
            r.task_cluster = c;
            result.trace.push_back(std::move(r));
        }
        result.feature_partitions.push_back(std::move(features.partition));
    }
    return result;
}

AggregationResult nonlin_ctfa_homogeneous(const Dataset& dataset, double epsilon, std::uint64_t seed,
                                          const AggregationOptions& options) {
    if (!dataset.has_per_task_features()) {
        throw ValidationError("homogeneous aggregation needs per-task feature slabs");
    }
    const auto L = static_cast<std::size_t>(dataset.task_count());
    AggregationResult result;
    result.variant = Variant::Homogeneous;
    result.candidate_mean = options.candidate_mean;
    result.seed = seed;
    result.epsilon1 = epsilon;
    result.epsilon2 = kUnset;
    result.task_order = shuffled_order(L, seed);

    LoopOutput tasks = aggregate_targets_homogeneous(dataset.per_task_features(), dataset.targets(),
                                                     result.task_order, epsilon, options);
    result.task_partition = tasks.partition;
    result.trace = std::move(tasks.trace);
    const auto D = static_cast<std::size_t>(dataset.feature_count());
    result.feature_partitions.assign(result.task_partition.size(), Partition::singletons(D));
    return result;
}

std::vector<ReplayMismatch> replay(const Dataset& dataset, const AggregationResult& result) {
    const bool homogeneous = result.variant == Variant::Homogeneous;
    if (homogeneous ? !dataset.has_per_task_features() : !dataset.has_shared_features()) {
        throw ValidationError("dataset does not match the result variant");
    }
    if (result.task_partition.universe() != static_cast<std::size_t>(dataset.task_count())) {
        throw ValidationError("result and dataset disagree on the number of tasks");
    }
    const CandidateMean mode = result.candidate_mean;
    const Eigen::MatrixXd& Y = dataset.targets();
    std::vector<ReplayMismatch> mismatches;

    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        const ThresholdReport& rec = result.trace[i];
        const Cluster& members = rec.members;
        if (members.empty()) throw ValidationError("trace record " + std::to_string(i) + " has no members");
        bool decision = false;
        double statistic = kUnset;
        double recorded = rec.phase == 1 ? std::max(rec.threshold1, rec.threshold2) : rec.r_gap;

        if (rec.phase == 1) {
            const Eigen::VectorXd y_P = mean_of_columns(Y, members);
            const Eigen::VectorXd y_j = Y.col(static_cast<Eigen::Index>(rec.candidate));
            const Eigen::VectorXd y_ag = candidate_column(y_P, y_j, members.size(), mode);
            ThresholdReport again;
            if (homogeneous) {
                const auto& slabs = dataset.per_task_features();
                const Eigen::MatrixXd X_P = mean_slab(slabs, members);
                const Eigen::MatrixXd X_ag = candidate_column(X_P, slabs[rec.candidate], members.size(), mode);
                again = compute_threshold_targets(X_P, slabs[rec.candidate], X_ag, y_P, y_j, y_ag, result.epsilon1);
            } else {
                again = compute_threshold_targets(LeastSquares(dataset.features()), y_P, y_j, y_ag, result.epsilon1);
            }
            decision = again.accepted;
            statistic = std::max(again.threshold1, again.threshold2);
        } else {
            if (!rec.task_cluster || *rec.task_cluster >= result.task_partition.size()) {
                throw ValidationError("trace record " + std::to_string(i) + " names no valid task cluster");
            }
            const std::size_t owner = *rec.task_cluster;
            const Eigen::VectorXd y = mean_of_columns(Y, result.task_partition[owner]);
            const Eigen::MatrixXd& X = dataset.features();
            const Partition& fp = result.feature_partitions[owner];
            if (rec.cluster_id >= fp.size()) {
                throw ValidationError("trace record " + std::to_string(i) + " names an unknown feature cluster");
            }
            std::vector<bool> assigned(static_cast<std::size_t>(X.cols()), false);
            std::vector<Eigen::VectorXd> finished;
            for (std::size_t c = 0; c < rec.cluster_id; ++c) {
                for (std::size_t f : fp[c]) assigned[f] = true;
                finished.push_back(mean_of_columns(X, fp[c]));
            }
            for (std::size_t f : members) assigned[f] = true;
            if (sample_variance(y) > 0.0) {
                const WorkingDesign w = working_design(X, members, assigned, finished);
                const Eigen::Index j = w.column_of.at(rec.candidate);
                if (j < 0) throw ValidationError("trace record " + std::to_string(i) + " tests an assigned feature");
                const OlsFit full = ols_fit(w.matrix, y);
                statistic = direct_gap(w.matrix, y, 0, j, candidate_weight(members.size(), mode), full);
                decision = statistic <= result.epsilon2;
            }
        }
        if (decision != rec.accepted) {
            mismatches.push_back(ReplayMismatch{i, rec.accepted, decision, recorded, statistic});
        }
    }
    return mismatches;
}

}  // namespace taskagg
