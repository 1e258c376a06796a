#include "taskagg/verify.hpp"

#include "taskagg/aggregation.hpp"
#include "taskagg/error.hpp"
#include "taskagg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

namespace taskagg {

namespace {

Eigen::MatrixXd centered(const Eigen::MatrixXd& m) { return m.rowwise() - m.colwise().mean(); }

double relative_deviation(double empirical, double theoretical) {
    return std::abs(empirical - theoretical) / std::abs(theoretical);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double low, double high,
                               std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(low, high);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = unif(rng);
    }
    return m;
}

// Random partition of `universe` items into `clusters` non-empty clusters.
Partition random_partition(std::size_t universe, std::size_t clusters, std::mt19937_64& rng) {
    std::vector<std::size_t> items(universe);
    std::iota(items.begin(), items.end(), std::size_t{0});
    std::shuffle(items.begin(), items.end(), rng);
    std::vector<Cluster> out(clusters);
    std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
    for (std::size_t i = 0; i < universe; ++i) out[i < clusters ? i : pick(rng)].push_back(items[i]);
    return Partition(std::move(out), universe);
}

MonteCarloOptions mc_options(const VerifyBudget& b, Eigen::Index n_train, std::uint64_t stream) {
    MonteCarloOptions o;
    o.n_train = n_train;
    o.replicates = b.replicates;
    o.n_eval = b.n_eval;
    o.seed = b.seed + 7919 * stream;
    o.jobs = b.jobs;
    return o;
}

CheckReport check_noise_variance(const VerifyBudget&) {
    CheckReport r;
    r.check = "noise_variance";
    const double rho_values[] = {0.0, 1.0, -1.0};
    const double expected[] = {0.5, 1.0, 0.0};
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double got = aggregated_noise_variance(NoiseModel::equicorrelated(2, 1.0, rho_values[k]), {0, 1});
        worst = std::max(worst, std::abs(got - expected[k]));
    }
    r.theoretical = 0.5;
    r.empirical = aggregated_noise_variance(NoiseModel::independent(2, 1.0), {0, 1});
    r.pass = worst <= 1e-12;
    r.detail = "K=2, sigma=1, rho in {0, 1, -1}; max abs error " + fmt(worst);
    return r;
}

CheckReport check_variance_reduction(const VerifyBudget& b) {
    CheckReport r;
    r.check = "variance_reduction";
    const Eigen::Index D = 5, n = 200;
    std::mt19937_64 rng = make_engine(b.seed, 11);
    const LinearGenerator gen(uniform_matrix(D, 2, -1.0, 1.0, rng), NoiseModel::independent(2, 1.0));
    const Pipeline p{{0, 1}, 0, Partition::singletons(D)};
    const auto est = monte_carlo_bias_variance(gen, p, mc_options(b, n, 1));
    r.theoretical = theoretical_variance(aggregated_noise_variance(gen.noise(), p.cluster), n, D);
    r.empirical = est.variance_term;
    r.standard_error = est.variance_se;
    r.replicates = est.replicates;
    r.pass = relative_deviation(r.empirical, r.theoretical) <= 0.15;
    r.detail = "K=2 independent noise, d=D=5, n=200; tolerance 15%";
    return r;
}

CheckReport check_variance_scaling(const VerifyBudget& b) {
    CheckReport r;
    r.check = "variance_scaling";
    const Eigen::Index n = 200;
    std::mt19937_64 rng = make_engine(b.seed, 12);
    double values[2];
    double ses[2];
    for (int k = 0; k < 2; ++k) {
        const Eigen::Index d = k == 0 ? 5 : 10;
        const LinearGenerator gen(uniform_matrix(d, 1, -1.0, 1.0, rng), NoiseModel::independent(1, 1.0));
        const auto est =
            monte_carlo_bias_variance(gen, {{0}, 0, Partition::singletons(d)}, mc_options(b, n, 2 + k));
        values[k] = est.variance_term;
        ses[k] = est.variance_se;
    }
    r.theoretical = 2.0;
    r.empirical = values[1] / values[0];
    r.standard_error = r.empirical * std::hypot(ses[0] / values[0], ses[1] / values[1]);
    r.replicates = b.replicates;
    r.pass = relative_deviation(r.empirical, r.theoretical) <= 0.15;
    r.detail = "variance ratio d=10 over d=5, n=200; tolerance 15%";
    return r;
}

CheckReport check_single_task_bias(const VerifyBudget& b) {
    CheckReport r;
    r.check = "single_task_bias";
    const std::size_t D = 10;
    std::mt19937_64 rng = make_engine(b.seed, 13);
    const Partition features = random_partition(D, 4, rng);
    const LinearGenerator gen(uniform_matrix(D, 1, -1.0, 1.0, rng), NoiseModel::independent(1, 0.5));
    const auto est = monte_carlo_bias_variance(gen, {{0}, 0, features}, mc_options(b, 100, 4));
    const PopulationFit fit = population_fit(gen, 0, features, b.n_pop, b.seed + 13);
    r.theoretical = fit.bias;
    r.empirical = est.bias_term;
    r.standard_error = std::hypot(est.bias_se, fit.bias_se);
    r.replicates = est.replicates;
    r.pass = std::abs(r.empirical - r.theoretical) <= 3.0 * r.standard_error;
    r.detail = "D=10, 4 random feature clusters, R^2_pop " + fmt(fit.r2) + "; tolerance 3 SE";
    return r;
}

CheckReport check_cluster_bias(const VerifyBudget& b) {
    CheckReport r;
    r.check = "cluster_bias";
    const std::size_t D = 10;
    std::mt19937_64 rng = make_engine(b.seed, 14);
    const Partition features = random_partition(D, 5, rng);
    const LinearGenerator gen(uniform_matrix(D, 2, -1.0, 1.0, rng), NoiseModel::independent(2, 0.5));
    const Pipeline p{{0, 1}, 0, features};
    const auto est = monte_carlo_bias_variance(gen, p, mc_options(b, 100, 5));
    const BiasDecomposition d = population_bias_decomposition(gen, p, b.n_pop, b.seed + 14);
    r.theoretical = theoretical_bias_multi(d);
    r.empirical = est.bias_term;
    r.standard_error = std::hypot(est.bias_se, d.standard_error);
    r.replicates = est.replicates;
    r.pass = std::abs(r.empirical - r.theoretical) <= 3.0 * r.standard_error;
    r.detail = "K=2, D=10, 5 random feature clusters, partial-covariance term " +
               fmt(2.0 * (d.partial_cov - d.plain_cov)) + "; tolerance 3 SE";
    return r;
}

CheckReport check_decomposition(const VerifyBudget& b) {
    CheckReport r;
    r.check = "decomposition";
    const std::size_t D = 8;
    std::mt19937_64 rng = make_engine(b.seed, 15);
    const Partition features = random_partition(D, 4, rng);
    const LinearGenerator gen(uniform_matrix(D, 3, -1.0, 1.0, rng), NoiseModel::equicorrelated(3, 1.0, 0.3));
    const auto est = monte_carlo_bias_variance(gen, {{0, 1, 2}, 1, features}, mc_options(b, 80, 6));
    r.theoretical = est.variance_term + est.bias_term + est.noise_term;
    r.empirical = est.total_mse;
    r.standard_error = est.closure_se;
    r.replicates = est.replicates;
    r.pass = std::abs(r.empirical - r.theoretical) <= 3.0 * r.standard_error;
    r.detail = "total MSE against variance + bias + noise; tolerance 3 SE";
    return r;
}

CheckReport check_coefficient_covariance(const VerifyBudget& b) {
    CheckReport r;
    r.check = "coefficient_covariance";
    std::mt19937_64 rng = make_engine(b.seed, 16);
    const LinearGenerator gen(Eigen::Vector2d(1.0, -0.5), NoiseModel::independent(1, 1.0),
                              equicorrelation(2, 0.9));
    const Eigen::MatrixXd X = gen.draw_features(200, rng);
    const auto rep = coefficient_covariance_check(X, gen.coefficients().col(0), 1.0, b.covariance_replicates, b.seed);
    r.theoretical = 0.0;
    r.empirical = rep.max_relative_deviation;
    r.replicates = b.covariance_replicates;
    r.pass = rep.max_relative_deviation <= 0.10;
    r.detail = "fixed design D=2, correlation 0.9, n=200; max relative deviation tolerance 10%";
    return r;
}

CheckReport check_delta_mse(const VerifyBudget& b) {
    CheckReport r;
    r.check = "delta_mse";
    std::mt19937_64 rng = make_engine(b.seed, 17);
    const LinearGenerator gen(uniform_matrix(6, 2, 0.5, 1.0, rng), NoiseModel::independent(2, 1.0));
    const auto rep = delta_mse_check(gen, {0, 1}, 0, mc_options(b, 100, 7), b.n_pop);
    r.theoretical = rep.delta_variance_theory;
    r.empirical = rep.delta_variance;
    r.standard_error = rep.delta_variance_se;
    r.replicates = rep.replicates;
    r.pass = rep.pass();
    r.detail = "variance decrease " + fmt(rep.delta_variance) + " vs " + fmt(rep.delta_variance_theory) +
               ", bias increase " + fmt(rep.delta_bias) + " vs " + fmt(rep.delta_bias_theory) + " (SE " +
               fmt(rep.delta_bias_se) + "); tolerance 3 SE";
    return r;
}

CheckReport check_feature_merge_delta(const VerifyBudget& b) {
    CheckReport r;
    r.check = "feature_merge_delta";
    const std::size_t D = 10;
    const Eigen::Index n = 60;
    const double sigma = 1.0;
    // Pairs (0,1), (2,3), (4,5) share nearly equal coefficients.
    Eigen::VectorXd w(10);
    w << 1.0, 1.05, -0.8, -0.75, 0.5, 0.55, 0.3, -0.6, 0.9, -0.2;
    const LinearGenerator gen(w, NoiseModel::independent(1, sigma));
    const Partition reduced({{0, 1}, {2, 3}, {4, 5}, {6}, {7}, {8}, {9}}, D);
    const Partition full = Partition::singletons(D);

    const PopulationFit fit_full = population_fit(gen, 0, full, b.n_pop, b.seed + 18);
    const PopulationFit fit_red = population_fit(gen, 0, reduced, b.n_pop, b.seed + 18);
    const double lhs = sigma * sigma / static_cast<double>(n - 1) * static_cast<double>(D - reduced.size());
    const double rhs = fit_full.var_f * (fit_full.r2 - fit_red.r2);
    const bool condition = lhs >= rhs;

    const auto paired = compare_pipelines(gen, {{0}, 0, full}, {{0}, 0, reduced}, mc_options(b, n, 8));
    r.theoretical = 0.0;
    r.empirical = paired.delta_total;
    r.standard_error = paired.delta_total_se;
    r.replicates = b.replicates;
    r.pass = condition && paired.delta_total <= 3.0 * paired.delta_total_se;
    r.detail = std::string("population condition ") + (condition ? "holds" : "fails") + " (" + fmt(lhs) +
               " >= " + fmt(rhs) + "); reduced minus full MSE must be at most 3 SE";
    return r;
}

CheckReport check_task_merge_guarantee(const VerifyBudget& b) {
    CheckReport r;
    r.check = "task_merge_guarantee";
    TargetTrialConfig cfg;
    cfg.replicates = std::max<Eigen::Index>(b.replicates / 2, 50);
    cfg.n_eval = b.n_eval;
    std::size_t accepted = 0, good = 0;
    for (Eigen::Index k = 0; k < b.draws; ++k) {
        const auto t = target_merge_trial(cfg, b.seed + 1000 + static_cast<std::uint64_t>(k));
        if (t.accepted) ++accepted;
        if (t.not_worse) ++good;
    }
    r.theoretical = 0.9;
    r.empirical = static_cast<double>(good) / static_cast<double>(b.draws);
    r.replicates = b.draws;
    r.pass = r.empirical >= 0.9;
    r.detail = "same-group tasks, " + std::to_string(accepted) + " of " + std::to_string(b.draws) +
               " merges accepted; fraction of draws without a worse member";
    return r;
}

CheckReport check_task_merge_orthogonal(const VerifyBudget& b) {
    CheckReport r;
    r.check = "task_merge_orthogonal";
    TargetTrialConfig cfg;
    cfg.orthogonal = true;
    cfg.sigma = 0.5;
    cfg.replicates = 0;
    std::size_t rejected = 0;
    for (Eigen::Index k = 0; k < b.draws; ++k) {
        if (!target_merge_trial(cfg, b.seed + 2000 + static_cast<std::uint64_t>(k)).accepted) ++rejected;
    }
    r.theoretical = 0.9;
    r.empirical = static_cast<double>(rejected) / static_cast<double>(b.draws);
    r.replicates = b.draws;
    r.pass = r.empirical >= 0.9;
    r.detail = "tasks with signal on disjoint features; fraction of draws rejected";
    return r;
}

CheckReport check_feature_merge_guarantee(const VerifyBudget& b) {
    CheckReport r;
    r.check = "feature_merge_guarantee";
    FeatureTrialConfig cfg;
    cfg.n_pop = b.n_pop;
    std::size_t good = 0, merges = 0;
    for (Eigen::Index k = 0; k < b.draws; ++k) {
        const auto t = feature_merge_trial(cfg, b.seed + 3000 + static_cast<std::uint64_t>(k));
        merges += t.merges;
        if (t.not_worse) ++good;
    }
    r.theoretical = 0.9;
    r.empirical = static_cast<double>(good) / static_cast<double>(b.draws);
    r.replicates = b.draws;
    r.pass = r.empirical >= 0.9;
    r.detail = std::to_string(merges) + " feature merges accepted at epsilon2=0 over " + std::to_string(b.draws) +
               " draws; fraction of draws without a worse model";
    return r;
}

CheckReport check_feature_merge_counterexample(const VerifyBudget& b) {
    CheckReport r;
    r.check = "feature_merge_counterexample";
    const auto out = antisymmetric_counterexample(1e-4, b.seed);
    r.theoretical = out.r_sep;
    r.empirical = out.r_aggr;
    r.replicates = 1;
    r.pass = !out.accepted;
    r.detail = "y = x_p - x_j + noise; merge of p and j must be rejected, R^2 gap " + fmt(out.gap);
    return r;
}

using CheckFn = CheckReport (*)(const VerifyBudget&);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
    static const std::vector<std::pair<std::string, CheckFn>> r{
        {"noise_variance", check_noise_variance},
        {"variance_reduction", check_variance_reduction},
        {"variance_scaling", check_variance_scaling},
        {"single_task_bias", check_single_task_bias},
        {"cluster_bias", check_cluster_bias},
        {"decomposition", check_decomposition},
        {"coefficient_covariance", check_coefficient_covariance},
        {"delta_mse", check_delta_mse},
        {"feature_merge_delta", check_feature_merge_delta},
        {"task_merge_guarantee", check_task_merge_guarantee},
        {"task_merge_orthogonal", check_task_merge_orthogonal},
        {"feature_merge_guarantee", check_feature_merge_guarantee},
        {"feature_merge_counterexample", check_feature_merge_counterexample},
    };
    return r;
}

// Paired error difference of two prediction rules against the noiseless
// signal; the noise adds the same constant to both.
PairedMse paired_mse(const Eigen::VectorXd& pred_a, const Eigen::VectorXd& pred_b, const Eigen::VectorXd& f,
                     double noise_var) {
    const Eigen::ArrayXd ea = (pred_a - f).array().square();
    const Eigen::ArrayXd eb = (pred_b - f).array().square();
    const Eigen::ArrayXd diff = eb - ea;
    const auto n = static_cast<double>(f.size());
    PairedMse out;
    out.mse_a = ea.mean() + noise_var;
    out.mse_b = eb.mean() + noise_var;
    out.difference = diff.mean();
    out.difference_se = std::sqrt((diff - diff.mean()).square().sum() / (n - 1.0) / n);
    return out;
}

}  // namespace

nlohmann::json to_json(const CheckReport& report) {
    return nlohmann::json{{"check", report.check},
                          {"theoretical", report.theoretical},
                          {"empirical", report.empirical},
                          {"standard_error", report.standard_error},
                          {"pass", report.pass},
                          {"replicates", report.replicates},
                          {"detail", report.detail}};
}

const std::vector<std::string>& available_checks() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [name, fn] : registry()) v.push_back(name);
        return v;
    }();
    return names;
}

CheckReport run_check(const std::string& name, const VerifyBudget& budget) {
    if (budget.replicates < 3) throw ValidationError("verification needs at least 3 replicates");
    if (budget.draws < 1) throw ValidationError("verification needs at least 1 draw");
    for (const auto& [n, fn] : registry()) {
        if (n == name) return fn(budget);
    }
    throw ValidationError("unknown check '" + name + "'");
}

std::vector<CheckReport> run_checks(const std::vector<std::string>& names, const VerifyBudget& budget) {
    for (const auto& name : names) {
        if (std::find(available_checks().begin(), available_checks().end(), name) == available_checks().end()) {
            throw ValidationError("unknown check '" + name + "'");
        }
    }
    std::vector<CheckReport> out;
    for (const auto& name : names) out.push_back(run_check(name, budget));
    return out;
}

TargetMergeTrial target_merge_trial(const TargetTrialConfig& c, std::uint64_t seed) {
    if (c.features < 2) throw ValidationError("target trial needs at least 2 features");
    std::mt19937_64 rng = make_engine(seed);
    Eigen::MatrixXd W = uniform_matrix(c.features, 2, 0.5, 1.0, rng);
    if (c.orthogonal) {
        const Eigen::Index half = c.features / 2;
        W.col(0).tail(c.features - half).setZero();
        W.col(1).head(half).setZero();
    }
    const LinearGenerator gen(W, NoiseModel::independent(2, c.sigma));
    const auto sample = gen.draw(c.n_train, rng);
    const Eigen::MatrixXd X = centered(sample.features);
    const Eigen::MatrixXd Y = centered(sample.targets);
    const ThresholdReport rep = compute_threshold_targets(X, Y.col(0), Y.col(1), c.epsilon);

    TargetMergeTrial out;
    out.accepted = rep.accepted;
    out.threshold1 = rep.threshold1;
    out.threshold2 = rep.threshold2;
    if (!out.accepted || c.replicates <= 0) return out;

    const Partition all = Partition::singletons(static_cast<std::size_t>(c.features));
    MonteCarloOptions o;
    o.n_train = c.n_train;
    o.replicates = c.replicates;
    o.n_eval = c.n_eval;
    o.seed = seed ^ 0x9e3779b97f4a7c15ULL;
    for (std::size_t task = 0; task < 2; ++task) {
        const auto paired = compare_pipelines(gen, {{task}, task, all}, {{0, 1}, task, all}, o);
        PairedMse m;
        m.mse_a = paired.a.total_mse;
        m.mse_b = paired.b.total_mse;
        m.difference = paired.delta_total;
        m.difference_se = paired.delta_total_se;
        if (m.difference > 3.0 * m.difference_se) out.not_worse = false;
        out.members.push_back(m);
    }
    return out;
}

FeatureMergeTrial feature_merge_trial(const FeatureTrialConfig& c, std::uint64_t seed) {
    if (c.base_features < 1 || c.duplicates < 0 || c.duplicates > c.base_features) {
        throw ValidationError("feature trial needs 0 <= duplicates <= base_features");
    }
    const Eigen::Index D = c.base_features + c.duplicates;
    std::mt19937_64 rng = make_engine(seed);
    const Eigen::VectorXd w = uniform_matrix(c.base_features, 1, -1.0, 1.0, rng).col(0);
    // Column base_features + k copies column k.
    auto expand = [&](const Eigen::MatrixXd& base) {
        Eigen::MatrixXd X(base.rows(), D);
        X.leftCols(c.base_features) = base;
        X.rightCols(c.duplicates) = base.leftCols(c.duplicates);
        return X;
    };
    const Eigen::MatrixXd base = standard_normal(c.n_train, c.base_features, rng);
    const Eigen::VectorXd y_raw = base * w + c.sigma * standard_normal(c.n_train, 1, rng).col(0);
    const Eigen::MatrixXd Xr = expand(base);
    const Eigen::RowVectorXd means = Xr.colwise().mean();
    const Eigen::MatrixXd X = Xr.rowwise() - means;
    const double y_mean = y_raw.mean();
    const Eigen::VectorXd y = y_raw.array() - y_mean;

    const LoopOutput loop = aggregate_features(X, y, c.epsilon);
    FeatureMergeTrial out;
    out.features = loop.partition.size();
    for (const auto& t : loop.trace) out.merges += t.accepted ? 1 : 0;

    const Eigen::MatrixXd Z = aggregate_columns(X, loop.partition);
    const Eigen::VectorXd w_full = LeastSquares(X).solve(y);
    const Eigen::VectorXd w_red = LeastSquares(Z).solve(y);

    const Eigen::MatrixXd pop_base = standard_normal(c.n_pop, c.base_features, rng);
    const Eigen::MatrixXd pop = expand(pop_base).rowwise() - means;
    const Eigen::VectorXd f = pop_base * w;
    const Eigen::VectorXd pred_full = (pop * w_full).array() + y_mean;
    const Eigen::VectorXd pred_red = (aggregate_columns(pop, loop.partition) * w_red).array() + y_mean;
    out.mse = paired_mse(pred_full, pred_red, f, c.sigma * c.sigma);
    out.not_worse = out.mse.difference <= 3.0 * out.mse.difference_se + 1e-12;
    return out;
}

CounterexampleOutcome antisymmetric_counterexample(double epsilon, std::uint64_t seed, Eigen::Index n,
                                                   Eigen::Index features, double noise) {
    if (features < 2) throw ValidationError("counterexample needs at least 2 features");
    std::mt19937_64 rng = make_engine(seed, 99);
    const Eigen::MatrixXd X = centered(standard_normal(n, features, rng));
    Eigen::VectorXd y = X.col(0) - X.col(1) + noise * standard_normal(n, 1, rng).col(0);
    y.array() -= y.mean();
    const ThresholdReport rep = compute_threshold_features(X, y, 0, 1, epsilon);
    return {rep.r_P, rep.r_ag, rep.r_gap, rep.accepted};
}

}  // namespace taskagg
