#include "taskagg/oracle.hpp"

#include "taskagg/error.hpp"
#include "taskagg/linstats.hpp"
#include "taskagg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace taskagg {

namespace {

// Stream reserved for evaluation and population draws; replicates use
// streams 1..R.
constexpr std::uint64_t kEvalStream = std::numeric_limits<std::uint64_t>::max();

void check_cluster(const Cluster& cluster, Eigen::Index tasks) {
    if (cluster.empty()) throw ValidationError("cluster must not be empty");
    for (std::size_t k : cluster) {
        if (static_cast<Eigen::Index>(k) >= tasks) {
            throw ValidationError("cluster index " + std::to_string(k) + " out of range for " +
                                  std::to_string(tasks) + " tasks");
        }
    }
}

Eigen::VectorXd cluster_weights(const Cluster& cluster, Eigen::Index tasks) {
    check_cluster(cluster, tasks);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(tasks);
    for (std::size_t k : cluster) w(static_cast<Eigen::Index>(k)) += 1.0 / static_cast<double>(cluster.size());
    return w;
}

Eigen::MatrixXd centered(const Eigen::MatrixXd& m) { return m.rowwise() - m.colwise().mean(); }

double sd_over_root_n(const Eigen::VectorXd& v) {
    if (v.size() < 2) return 0.0;
    return std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
}

// Projection of centered `target` on centered `inputs` using the sample
// covariance, with a pseudo-inverse fallback.
Eigen::VectorXd projection_coefficients(const Eigen::MatrixXd& inputs_c, const Eigen::VectorXd& target_c,
                                        std::string* diagnostic) {
    const Eigen::MatrixXd S = inputs_c.transpose() * inputs_c;
    const Eigen::VectorXd s = inputs_c.transpose() * target_c;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(S);
    if (ldlt.info() == Eigen::Success && cod.rank() == S.rows()) return ldlt.solve(s);
    if (diagnostic != nullptr) *diagnostic = "singular input covariance; used the pseudo-inverse";
    return cod.pseudoInverse() * s;
}

double jackknife_se(const Eigen::VectorXd& loo) {
    const auto R = static_cast<double>(loo.size());
    if (loo.size() < 2) return 0.0;
    return std::sqrt((R - 1.0) / R * (loo.array() - loo.mean()).square().sum());
}

double hypot3(double a, double b) { return std::sqrt(a * a + b * b); }

struct PipelineSetup {
    Eigen::MatrixXd aggregation;  // D x d
    Eigen::VectorXd weights;      // L
    std::size_t task = 0;
    Eigen::MatrixXd eval_inputs;  // n_eval x d
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    double c = 0.0;
};

struct ReplicateData {
    Eigen::MatrixXd coefficients;  // R x d
    Eigen::VectorXd totals;        // R
};

// Summary statistics of one pipeline with their leave-one-out versions.
struct Summary {
    BiasVarianceEstimate estimate;
    Eigen::VectorXd variance_loo, bias_loo, total_loo;
    Eigen::VectorXd variance_x, bias_x;  // per evaluation point
};

Summary summarize(const PipelineSetup& p, const ReplicateData& data, const Eigen::VectorXd& f_eval, double noise) {
    const Eigen::Index R = data.coefficients.rows();
    const auto Rd = static_cast<double>(R);
    const Eigen::VectorXd wbar = data.coefficients.colwise().mean().transpose();
    const Eigen::MatrixXd delta = data.coefficients.rowwise() - wbar.transpose();
    const Eigen::MatrixXd C = delta.transpose() * delta / (Rd - 1.0);

    const Eigen::VectorXd q = (delta * p.G).cwiseProduct(delta).rowwise().sum();
    const double trace_GS = q.sum();
    const double V = trace_GS / (Rd - 1.0);
    auto b_of = [&](const Eigen::VectorXd& w) { return w.dot(p.G * w) - 2.0 * w.dot(p.h) + p.c; };
    const double B = b_of(wbar) - V / Rd;
    const double T = data.totals.mean();

    Summary s;
    s.variance_loo = (trace_GS - Rd / (Rd - 1.0) * q.array()) / (Rd - 2.0);
    const Eigen::VectorXd grad = p.G * wbar - p.h;
    const Eigen::VectorXd lin = delta * grad;
    s.bias_loo.resize(R);
    for (Eigen::Index r = 0; r < R; ++r) {
        const double b_loo = b_of(wbar) - 2.0 / (Rd - 1.0) * lin(r) + q(r) / ((Rd - 1.0) * (Rd - 1.0));
        s.bias_loo(r) = b_loo - s.variance_loo(r) / (Rd - 1.0);
    }
    s.total_loo = (Rd * T - data.totals.array()) / (Rd - 1.0);

    s.variance_x = (p.eval_inputs * C).cwiseProduct(p.eval_inputs).rowwise().sum();
    s.bias_x = (p.eval_inputs * wbar - f_eval).array().square();

    auto& e = s.estimate;
    e.variance_term = V;
    e.bias_term = B;
    e.noise_term = noise;
    e.total_mse = T;
    e.variance_se = hypot3(jackknife_se(s.variance_loo), sd_over_root_n(s.variance_x));
    e.bias_se = hypot3(jackknife_se(s.bias_loo), sd_over_root_n(s.bias_x));
    e.noise_se = 0.0;
    e.total_se = hypot3(jackknife_se(s.total_loo), sd_over_root_n(s.variance_x + s.bias_x));
    const Eigen::VectorXd closure_loo = s.total_loo - s.variance_loo - s.bias_loo;
    e.closure_se = jackknife_se(closure_loo);
    e.replicates = R;
    return s;
}

void check_options(const MonteCarloOptions& o, Eigen::Index d) {
    if (o.replicates < 3) throw ValidationError("Monte-Carlo estimation needs at least 3 replicates");
    if (o.n_eval < 2) throw ValidationError("Monte-Carlo estimation needs at least 2 evaluation points");
    if (o.n_train < d + 1) {
        throw ValidationError("n_train " + std::to_string(o.n_train) + " too small for " + std::to_string(d) +
                              " inputs");
    }
}

void flag_budget(BiasVarianceEstimate& e, double target) {
    if (!(target > 0.0)) return;
    const double rel_v = e.variance_term > 0.0 ? e.variance_se / e.variance_term : 0.0;
    const double rel_b = e.bias_term > 0.0 ? e.bias_se / e.bias_term : 0.0;
    if (rel_v > target || rel_b > target) {
        e.budget_warning = true;
        e.warning = "replicate budget too small: relative standard error " +
                    std::to_string(std::max(rel_v, rel_b)) + " exceeds target " + std::to_string(target);
    }
}

// Fits every pipeline on common training sets and scores on common
// evaluation draws.
std::vector<Summary> run_pipelines(const LinearGenerator& gen, const std::vector<Pipeline>& pipelines,
                                   const MonteCarloOptions& o) {
    const Eigen::Index D = gen.features();
    const Eigen::Index L = gen.tasks();
    std::vector<PipelineSetup> setups;
    for (const auto& pl : pipelines) {
        if (pl.features.universe() != static_cast<std::size_t>(D)) {
            throw ValidationError("feature partition covers " + std::to_string(pl.features.universe()) +
                                  " features, generator has " + std::to_string(D));
        }
        if (static_cast<Eigen::Index>(pl.task) >= L) throw ValidationError("pipeline task out of range");
        PipelineSetup s;
        s.aggregation = aggregation_matrix(pl.features);
        s.weights = cluster_weights(pl.cluster, L);
        s.task = pl.task;
        check_options(o, s.aggregation.cols());
        setups.push_back(std::move(s));
    }

    std::mt19937_64 eval_rng = make_engine(o.seed, kEvalStream);
    const Eigen::MatrixXd X_eval = gen.draw_features(o.n_eval, eval_rng);
    const Eigen::MatrixXd F_eval = X_eval * gen.coefficients();
    const auto n_eval = static_cast<double>(o.n_eval);
    for (auto& s : setups) {
        s.eval_inputs = X_eval * s.aggregation;
        const Eigen::VectorXd f = F_eval.col(static_cast<Eigen::Index>(s.task));
        s.G = s.eval_inputs.transpose() * s.eval_inputs / n_eval;
        s.h = s.eval_inputs.transpose() * f / n_eval;
        s.c = f.squaredNorm() / n_eval;
    }

    std::vector<ReplicateData> data(setups.size());
    for (std::size_t k = 0; k < setups.size(); ++k) {
        data[k].coefficients.resize(o.replicates, setups[k].aggregation.cols());
        data[k].totals.resize(o.replicates);
    }
    parallel_for(static_cast<std::size_t>(o.replicates), o.jobs, [&](std::size_t r) {
        std::mt19937_64 rng = make_engine(o.seed, r + 1);
        const auto sample = gen.draw(o.n_train, rng);
        const Eigen::MatrixXd fresh_noise = gen.noise().draw(o.n_eval, rng);
        for (std::size_t k = 0; k < setups.size(); ++k) {
            const auto& s = setups[k];
            const Eigen::VectorXd psi = sample.targets * s.weights;
            const Eigen::VectorXd w = LeastSquares(sample.features * s.aggregation).solve(psi);
            const auto t = static_cast<Eigen::Index>(s.task);
            const Eigen::VectorXd err = s.eval_inputs * w - F_eval.col(t) - fresh_noise.col(t);
            const auto row = static_cast<Eigen::Index>(r);
            data[k].coefficients.row(row) = w.transpose();
            data[k].totals(row) = err.squaredNorm() / n_eval;
        }
    });

    std::vector<Summary> out;
    for (std::size_t k = 0; k < setups.size(); ++k) {
        const auto t = static_cast<Eigen::Index>(setups[k].task);
        const double sigma = gen.noise().sigmas()(t);
        out.push_back(summarize(setups[k], data[k], F_eval.col(t), sigma * sigma));
        flag_budget(out.back().estimate, o.target_relative_se);
    }
    return out;
}

}  // namespace

double aggregated_noise_variance(const NoiseModel& model, const Cluster& cluster) {
    check_cluster(cluster, model.tasks());
    double sum = 0.0;
    for (std::size_t h : cluster) {
        for (std::size_t k : cluster) {
            const auto hi = static_cast<Eigen::Index>(h), ki = static_cast<Eigen::Index>(k);
            sum += model.sigmas()(hi) * model.sigmas()(ki) * model.correlation()(hi, ki);
        }
    }
    const auto K = static_cast<double>(cluster.size());
    return std::max(0.0, sum / (K * K));
}

double theoretical_variance(double sigma_bar_sq, Eigen::Index n, Eigen::Index d) {
    if (n < 2) throw ValidationError("theoretical variance needs n >= 2");
    if (d < 1) throw ValidationError("theoretical variance needs d >= 1");
    return sigma_bar_sq * static_cast<double>(d) / static_cast<double>(n - 1);
}

double theoretical_bias_single(double var_f, double r2) { return var_f * (1.0 - r2); }

double theoretical_bias_multi(const BiasDecomposition& d) {
    return d.var_f_i - d.var_psi * d.r2_d_iota + 2.0 * (d.partial_cov - d.plain_cov);
}

BiasDecomposition make_bias_decomposition(double var_f_i, double var_psi, double r2_d_iota, double partial_cov,
                                          double plain_cov) {
    BiasDecomposition d;
    d.var_f_i = var_f_i;
    d.var_psi = var_psi;
    d.r2_d_iota = r2_d_iota;
    d.partial_cov = partial_cov;
    d.plain_cov = plain_cov;
    d.bias_value = theoretical_bias_multi(d);
    return d;
}

double partial_covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& inputs,
                          std::string* diagnostic) {
    if (a.size() != b.size() || a.size() != inputs.rows()) throw ValidationError("partial covariance shape mismatch");
    if (a.size() < 2) throw ValidationError("partial covariance needs at least 2 samples");
    const Eigen::MatrixXd Xc = centered(inputs);
    const Eigen::VectorXd ac = a.array() - a.mean();
    const Eigen::VectorXd bc = b.array() - b.mean();
    const Eigen::VectorXd beta = projection_coefficients(Xc, bc, diagnostic);
    const double n1 = static_cast<double>(a.size() - 1);
    return ac.dot(bc) / n1 - (Xc.transpose() * ac).dot(beta) / n1;
}

Eigen::MatrixXd aggregation_matrix(const Partition& features) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(features.universe()),
                                              static_cast<Eigen::Index>(features.size()));
    for (std::size_t c = 0; c < features.size(); ++c) {
        for (std::size_t k : features[c]) {
            A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
                1.0 / static_cast<double>(features[c].size());
        }
    }
    return A;
}

BiasDecomposition population_bias_decomposition(const LinearGenerator& generator, const Pipeline& pipeline,
                                                Eigen::Index n_pop, std::uint64_t seed) {
    if (n_pop < 2) throw ValidationError("population estimate needs n_pop >= 2");
    if (static_cast<Eigen::Index>(pipeline.task) >= generator.tasks()) {
        throw ValidationError("pipeline task out of range");
    }
    if (pipeline.features.universe() != static_cast<std::size_t>(generator.features())) {
        throw ValidationError("feature partition does not match the generator");
    }
    std::mt19937_64 rng = make_engine(seed, kEvalStream);
    const Eigen::MatrixXd X = generator.draw_features(n_pop, rng);
    const Eigen::MatrixXd F = X * generator.coefficients();
    const Eigen::VectorXd f = F.col(static_cast<Eigen::Index>(pipeline.task));
    const Eigen::VectorXd psi = F * cluster_weights(pipeline.cluster, generator.tasks());
    const Eigen::MatrixXd Phi = centered(X * aggregation_matrix(pipeline.features));

    const Eigen::VectorXd fc = f.array() - f.mean();
    const Eigen::VectorXd pc = psi.array() - psi.mean();
    const double n1 = static_cast<double>(n_pop - 1);
    std::string diagnostic;
    const Eigen::VectorXd beta = projection_coefficients(Phi, pc, &diagnostic);
    const Eigen::VectorXd projected = Phi * beta;

    const double var_f = fc.squaredNorm() / n1;
    const double var_psi = pc.squaredNorm() / n1;
    const double r2 = var_psi > 0.0 ? projected.dot(pc) / n1 / var_psi : 0.0;
    const Eigen::VectorXd gap = fc - pc;
    const double plain = pc.dot(gap) / n1;
    const double partial = plain - projected.dot(gap) / n1;

    BiasDecomposition d = make_bias_decomposition(var_f, var_psi, r2, partial, plain);
    d.diagnostic = diagnostic;
    const Eigen::VectorXd resid = fc - projected;
    d.direct_value = resid.squaredNorm() / n1;
    const Eigen::VectorXd sq = resid.array().square();
    d.standard_error = sd_over_root_n(sq);
    return d;
}

PopulationFit population_fit(const LinearGenerator& generator, std::size_t task, const Partition& features,
                             Eigen::Index n_pop, std::uint64_t seed) {
    Pipeline p{Cluster{task}, task, features};
    const BiasDecomposition d = population_bias_decomposition(generator, p, n_pop, seed);
    PopulationFit out;
    out.var_f = d.var_f_i;
    out.r2 = d.r2_d_iota;
    out.bias = theoretical_bias_single(d.var_f_i, d.r2_d_iota);
    out.bias_se = d.standard_error;
    return out;
}

BiasVarianceEstimate monte_carlo_bias_variance(const LinearGenerator& generator, const Pipeline& pipeline,
                                               const MonteCarloOptions& options) {
    return run_pipelines(generator, {pipeline}, options).front().estimate;
}

PairedEstimate compare_pipelines(const LinearGenerator& generator, const Pipeline& a, const Pipeline& b,
                                 const MonteCarloOptions& options) {
    auto s = run_pipelines(generator, {a, b}, options);
    PairedEstimate out;
    out.a = s[0].estimate;
    out.b = s[1].estimate;
    out.delta_variance = out.b.variance_term - out.a.variance_term;
    out.delta_bias = out.b.bias_term - out.a.bias_term;
    out.delta_total = out.b.total_mse - out.a.total_mse;
    out.delta_variance_se = hypot3(jackknife_se(s[1].variance_loo - s[0].variance_loo),
                                   sd_over_root_n(s[1].variance_x - s[0].variance_x));
    out.delta_bias_se =
        hypot3(jackknife_se(s[1].bias_loo - s[0].bias_loo), sd_over_root_n(s[1].bias_x - s[0].bias_x));
    out.delta_total_se = hypot3(jackknife_se(s[1].total_loo - s[0].total_loo),
                                sd_over_root_n((s[1].variance_x + s[1].bias_x) - (s[0].variance_x + s[0].bias_x)));
    return out;
}

CoefficientCovarianceReport coefficient_covariance_check(const Eigen::MatrixXd& design,
                                                         const Eigen::VectorXd& coefficients, double sigma,
                                                         Eigen::Index replicates, std::uint64_t seed) {
    if (design.cols() != coefficients.size()) throw ValidationError("design and coefficients disagree on D");
    if (replicates < 2) throw ValidationError("coefficient covariance needs at least 2 replicates");
    if (!(sigma >= 0.0)) throw ValidationError("sigma must be nonnegative");
    const Eigen::Index n = design.rows();
    const Eigen::Index D = design.cols();
    const Eigen::MatrixXd X = centered(design);
    const LeastSquares ls(X);
    if (ls.rank() < D) throw NumericalError("design matrix is singular");

    const Eigen::MatrixXd sample_cov = X.transpose() * X / static_cast<double>(n - 1);
    CoefficientCovarianceReport out;
    out.theoretical = sigma * sigma / static_cast<double>(n - 1) * sample_cov.inverse();

    const Eigen::VectorXd signal = X * coefficients;
    Eigen::MatrixXd W(replicates, D);
    for (Eigen::Index r = 0; r < replicates; ++r) {
        std::mt19937_64 rng = make_engine(seed, static_cast<std::uint64_t>(r) + 1);
        const Eigen::VectorXd noise = sigma * standard_normal(n, 1, rng).col(0);
        W.row(r) = ls.solve(signal + noise).transpose();
    }
    const Eigen::MatrixXd delta = W.rowwise() - W.colwise().mean();
    out.empirical = delta.transpose() * delta / static_cast<double>(replicates - 1);

    for (Eigen::Index i = 0; i < D; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double th = out.theoretical(i, j);
            if (std::abs(th) <= 1e-6) continue;
            out.max_relative_deviation =
                std::max(out.max_relative_deviation, std::abs(out.empirical(i, j) - th) / std::abs(th));
            ++out.entries_compared;
        }
    }
    return out;
}

CoefficientCovarianceReport coefficient_covariance_check(const LinearGenerator& generator, Eigen::Index n_train,
                                                         Eigen::Index replicates, std::uint64_t seed) {
    std::mt19937_64 rng = make_engine(seed, kEvalStream);
    const Eigen::MatrixXd X = generator.draw_features(n_train, rng);
    return coefficient_covariance_check(X, generator.coefficients().col(0), generator.noise().sigmas()(0),
                                        replicates, seed);
}

DeltaMseReport delta_mse_check(const LinearGenerator& generator, const Cluster& cluster, std::size_t task,
                               const MonteCarloOptions& options, Eigen::Index n_pop) {
    if (std::find(cluster.begin(), cluster.end(), task) == cluster.end()) {
        throw ValidationError("task must belong to the cluster");
    }
    const Eigen::Index D = generator.features();
    const Partition all = Partition::singletons(static_cast<std::size_t>(D));
    const Pipeline single{Cluster{task}, task, all};
    const Pipeline merged{cluster, task, all};
    const PairedEstimate paired = compare_pipelines(generator, single, merged, options);

    DeltaMseReport r;
    r.replicates = options.replicates;
    r.delta_variance = -paired.delta_variance;
    r.delta_variance_se = paired.delta_variance_se;
    r.delta_bias = paired.delta_bias;
    r.delta_bias_se = paired.delta_bias_se;

    const double sigma_i = generator.noise().sigmas()(static_cast<Eigen::Index>(task));
    const double sigma_bar_sq = aggregated_noise_variance(generator.noise(), cluster);
    r.delta_variance_theory = (sigma_i * sigma_i - sigma_bar_sq) * static_cast<double>(D) /
                              static_cast<double>(options.n_train - 1);

    std::mt19937_64 rng = make_engine(options.seed ^ 0x5bd1e995u, kEvalStream);
    const Eigen::MatrixXd X = centered(generator.draw_features(n_pop, rng));
    const Eigen::MatrixXd F = X * generator.coefficients();
    const Eigen::VectorXd f = F.col(static_cast<Eigen::Index>(task));
    const Eigen::VectorXd psi = F * cluster_weights(cluster, generator.tasks());
    const double n1 = static_cast<double>(n_pop - 1);
    const Eigen::VectorXd proj_psi = X * projection_coefficients(X, psi, nullptr);
    const Eigen::VectorXd proj_f = X * projection_coefficients(X, f, nullptr);
    const double var_psi = psi.squaredNorm() / n1;
    const double var_f = f.squaredNorm() / n1;
    const double r2_psi = var_psi > 0.0 ? proj_psi.dot(psi) / n1 / var_psi : 0.0;
    const double r2_f = var_f > 0.0 ? proj_f.dot(f) / n1 / var_f : 0.0;
    const double cov_f_psi = f.dot(psi) / n1;
    const double partial_f_psi = cov_f_psi - f.dot(proj_psi) / n1;
    r.delta_bias_theory = var_psi * r2_psi + var_f * r2_f - 2.0 * (cov_f_psi - partial_f_psi);

    const Eigen::VectorXd e_merged = f - proj_psi;
    const Eigen::VectorXd e_single = f - proj_f;
    const Eigen::VectorXd per_sample = e_merged.array().square() - e_single.array().square();
    const double theory_se = sd_over_root_n(per_sample);

    r.variance_pass = std::abs(r.delta_variance - r.delta_variance_theory) <= 3.0 * r.delta_variance_se;
    r.bias_pass = std::abs(r.delta_bias - r.delta_bias_theory) <= 3.0 * hypot3(r.delta_bias_se, theory_se);
    return r;
}

}  // namespace taskagg
