#include "taskagg/synth.hpp"

#include "taskagg/aggregation.hpp"
#include "taskagg/error.hpp"
#include "taskagg/linstats.hpp"
#include "taskagg/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace taskagg {

namespace {

struct IntervalMoments {
    double mean = 0.0;
    double second = 0.0;
};

IntervalMoments uniform_moments(const CoefficientInterval& iv) {
    const double a = iv.low, b = iv.high;
    return {(a + b) / 2.0, (a * a + a * b + b * b) / 3.0};
}

// Expected signal variance w^T S w for equicorrelated unit-variance features,
// averaged over tasks and coefficient draws: linear in the correlation.
std::pair<double, double> signal_variance_terms(const SynthConfig& c) {
    const auto groups = c.groups();
    const double D = static_cast<double>(c.features);
    double base = 0.0, slope = 0.0;
    for (std::size_t g : groups) {
        const auto m = uniform_moments(c.intervals[g]);
        const double norm2 = D * m.second;
        const double sum2 = D * (m.second - m.mean * m.mean) + D * D * m.mean * m.mean;
        base += norm2;
        slope += sum2 - norm2;
    }
    const double L = static_cast<double>(groups.size());
    return {base / L, slope / L};
}

// Expected OLS test MSE inflation over the noise variance with an intercept
// removed by centering.
double variance_inflation(const SynthConfig& c) {
    const double D = static_cast<double>(c.features);
    const double n = static_cast<double>(c.n_train);
    if (n - D - 2.0 <= 0.0) throw ValidationError("R^2 approximation needs n_train > features + 2");
    return (D + 1.0) / (n - D - 2.0);
}

double population_variance(const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().mean();
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

SynthConfig SynthConfig::reference() {
    SynthConfig c;
    c.feature_correlation = calibrate_feature_correlation(c, 0.48);
    return c;
}

void SynthConfig::validate() const {
    if (tasks < 1 || features < 1 || n_train < 1 || n_test < 1) {
        throw ValidationError("tasks, features, n_train and n_test must all be at least 1");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be finite and nonnegative");
    if (intervals.empty()) throw ValidationError("at least one coefficient interval is required");
    for (const auto& iv : intervals) {
        if (!(iv.low <= iv.high) || !std::isfinite(iv.low) || !std::isfinite(iv.high)) {
            throw ValidationError("coefficient interval must satisfy low <= high");
        }
    }
    if (!task_groups.empty()) {
        if (static_cast<Eigen::Index>(task_groups.size()) != tasks) {
            throw ValidationError("task_groups must list one group per task");
        }
        for (std::size_t g : task_groups) {
            if (g >= intervals.size()) throw ValidationError("task group " + std::to_string(g) + " has no interval");
        }
    }
    if (noise_correlation.size() != 0) {
        if (noise_correlation.rows() != tasks) throw ValidationError("noise correlation must be tasks x tasks");
        validate_correlation(noise_correlation);
    }
    const double D = static_cast<double>(features);
    const double lower = features > 1 ? -1.0 / (D - 1.0) : -1.0;
    if (!(feature_correlation >= lower && feature_correlation <= 1.0)) {
        throw ValidationError("feature correlation must lie in [-1/(D-1), 1]");
    }
    if (n_repeats < 1) throw ValidationError("n_repeats must be at least 1");
}

std::vector<std::size_t> SynthConfig::groups() const {
    if (!task_groups.empty()) return task_groups;
    std::vector<std::size_t> g(static_cast<std::size_t>(tasks));
    const std::size_t k = intervals.size();
    const std::size_t base = g.size() / k, extra = g.size() % k;
    std::size_t t = 0;
    for (std::size_t group = 0; group < k; ++group) {
        const std::size_t size = base + (group < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) g[t++] = group;
    }
    return g;
}

NoiseModel SynthConfig::noise_model() const {
    Eigen::MatrixXd corr = noise_correlation.size() == 0 ? Eigen::MatrixXd::Identity(tasks, tasks) : noise_correlation;
    return NoiseModel(Eigen::VectorXd::Constant(tasks, sigma), std::move(corr));
}

SynthConfig synth_config_from_json(const nlohmann::json& j, const SynthConfig& base) {
    if (!j.is_object()) throw ValidationError("synth config must be a JSON object");
    SynthConfig c = base;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "tasks") {
                c.tasks = v.get<Eigen::Index>();
            } else if (key == "features") {
                c.features = v.get<Eigen::Index>();
            } else if (key == "n_train") {
                c.n_train = v.get<Eigen::Index>();
            } else if (key == "n_test") {
                c.n_test = v.get<Eigen::Index>();
            } else if (key == "sigma") {
                c.sigma = v.get<double>();
            } else if (key == "feature_correlation") {
                c.feature_correlation = v.get<double>();
            } else if (key == "n_repeats") {
                c.n_repeats = v.get<std::size_t>();
            } else if (key == "epsilon1") {
                c.epsilon1 = v.get<double>();
            } else if (key == "epsilon2") {
                c.epsilon2 = v.get<double>();
            } else if (key == "candidate_mean") {
                c.candidate_mean = candidate_mean_from(v.get<std::string>());
            } else if (key == "task_groups") {
                c.task_groups = v.get<std::vector<std::size_t>>();
            } else if (key == "intervals") {
                c.intervals.clear();
                for (const auto& iv : v) {
                    if (!iv.is_array() || iv.size() != 2) throw ValidationError("interval must be [low, high]");
                    c.intervals.push_back({iv[0].get<double>(), iv[1].get<double>()});
                }
            } else if (key == "noise_correlation") {
                const auto rows = v.get<std::vector<std::vector<double>>>();
                c.noise_correlation.resize(static_cast<Eigen::Index>(rows.size()),
                                           static_cast<Eigen::Index>(rows.size()));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != rows.size()) throw ValidationError("noise_correlation must be square");
                    for (std::size_t k = 0; k < rows.size(); ++k) {
                        c.noise_correlation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
                    }
                }
            } else {
                throw ValidationError("unknown synth config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid synth config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const SynthConfig& c) {
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& iv : c.intervals) intervals.push_back({iv.low, iv.high});
    nlohmann::json j{{"tasks", c.tasks},
                     {"features", c.features},
                     {"n_train", c.n_train},
                     {"n_test", c.n_test},
                     {"sigma", c.sigma},
                     {"feature_correlation", c.feature_correlation},
                     {"intervals", intervals},
                     {"task_groups", c.groups()},
                     {"n_repeats", c.n_repeats},
                     {"epsilon1", c.epsilon1},
                     {"epsilon2", c.epsilon2},
                     {"candidate_mean", candidate_mean_name(c.candidate_mean)}};
    if (c.noise_correlation.size() != 0) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < c.noise_correlation.rows(); ++r) {
            nlohmann::json jr = nlohmann::json::array();
            for (Eigen::Index k = 0; k < c.noise_correlation.cols(); ++k) jr.push_back(c.noise_correlation(r, k));
            rows.push_back(jr);
        }
        j["noise_correlation"] = rows;
    }
    return j;
}

LinearGenerator make_generator(const SynthConfig& config, const Eigen::MatrixXd& coefficients) {
    Eigen::MatrixXd cov;
    if (config.feature_correlation != 0.0) cov = equicorrelation(config.features, config.feature_correlation);
    return LinearGenerator(coefficients, config.noise_model(), std::move(cov));
}

SynthData generate(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng = make_engine(seed);
    const auto groups = config.groups();

    Eigen::MatrixXd W(config.features, config.tasks);
    for (Eigen::Index t = 0; t < config.tasks; ++t) {
        const auto& iv = config.intervals[groups[static_cast<std::size_t>(t)]];
        std::uniform_real_distribution<double> unif(iv.low, iv.high);
        for (Eigen::Index k = 0; k < config.features; ++k) W(k, t) = iv.low == iv.high ? iv.low : unif(rng);
    }
    const LinearGenerator gen = make_generator(config, W);

    const Eigen::MatrixXd X_train = gen.draw_features(config.n_train, rng);
    const Eigen::MatrixXd X_test = gen.draw_features(config.n_test, rng);
    Eigen::MatrixXd E_train = gen.noise().draw(config.n_train, rng);
    Eigen::MatrixXd E_test = gen.noise().draw(config.n_test, rng);

    Dataset train(X_train, X_train * W + E_train);
    Dataset test(X_test, X_test * W + E_test);
    return SynthData{std::move(train), std::move(test),
                     SyntheticTask{std::move(W), std::move(E_train), std::move(E_test), groups}};
}

double expected_single_task_r2(const SynthConfig& config) {
    config.validate();
    const auto [base, slope] = signal_variance_terms(config);
    const double s2 = config.sigma * config.sigma;
    const double signal = base + slope * config.feature_correlation;
    const double total = signal + s2;
    if (total == 0.0) return 1.0;
    return 1.0 - s2 * (1.0 + variance_inflation(config)) / total;
}

double calibrate_feature_correlation(const SynthConfig& config, double target_r2) {
    SynthConfig c = config;
    c.feature_correlation = 0.0;
    c.validate();
    if (!(target_r2 < 1.0)) throw ValidationError("target R^2 must be below 1");
    const auto [base, slope] = signal_variance_terms(c);
    const double s2 = c.sigma * c.sigma;
    const double needed = s2 * (1.0 + variance_inflation(c)) / (1.0 - target_r2) - s2;
    if (slope == 0.0) throw ValidationError("feature correlation does not change the signal variance");
    const double rho = (needed - base) / slope;
    c.feature_correlation = rho;
    c.validate();
    return rho;
}

RunMetrics score_result(const Dataset& train, const Dataset& test, const AggregationResult& result) {
    const Eigen::MatrixXd& Xtr = train.features();
    const Eigen::MatrixXd& Xte = test.features();
    const Eigen::MatrixXd& Ytr = train.targets();
    const Eigen::MatrixXd& Yte = test.targets();
    const Eigen::Index L = Ytr.cols();
    const LeastSquares full(Xtr);

    Eigen::VectorXd mse_s(L), mse_1(L), mse_2(L), r2_s(L), r2_1(L), r2_2(L);
    auto score = [&](const Eigen::VectorXd& pred, Eigen::Index t, Eigen::VectorXd& m, Eigen::VectorXd& r2) {
        m(t) = mse(pred, Yte.col(t));
        r2(t) = 1.0 - m(t) / population_variance(Yte.col(t));
    };
    for (Eigen::Index t = 0; t < L; ++t) score(Xte * full.solve(Ytr.col(t)), t, mse_s, r2_s);

    RunMetrics out;
    double reduced = 0.0;
    for (std::size_t c = 0; c < result.task_partition.size(); ++c) {
        const Cluster& members = result.task_partition[c];
        const Eigen::VectorXd psi = mean_of_columns(Ytr, members);
        const Eigen::VectorXd pred1 = Xte * full.solve(psi);
        const Partition& fp = result.feature_partitions[c];
        const Eigen::MatrixXd Phi_tr = aggregate_columns(Xtr, fp);
        const Eigen::MatrixXd Phi_te = aggregate_columns(Xte, fp);
        const Eigen::VectorXd pred2 = Phi_te * LeastSquares(Phi_tr).solve(psi);
        for (std::size_t t : members) {
            score(pred1, static_cast<Eigen::Index>(t), mse_1, r2_1);
            score(pred2, static_cast<Eigen::Index>(t), mse_2, r2_2);
        }
        reduced += static_cast<double>(fp.size());
    }
    out.single_mse = mse_s.mean();
    out.phase1_mse = mse_1.mean();
    out.phase12_mse = mse_2.mean();
    out.single_r2 = r2_s.mean();
    out.phase1_r2 = r2_1.mean();
    out.phase12_r2 = r2_2.mean();
    // Below the floor the single-task error is rounding noise: the change is
    // zero when the other model is also at the floor and undefined otherwise.
    double scale = 0.0;
    for (Eigen::Index t = 0; t < L; ++t) scale += population_variance(Yte.col(t)) / static_cast<double>(L);
    const double floor = 1e-12 * std::max(scale, 1.0);
    auto change = [&](double other) {
        if (out.single_mse > floor) return 100.0 * (other - out.single_mse) / out.single_mse;
        return other <= floor ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    };
    out.phase1_change_pct = change(out.phase1_mse);
    out.phase12_change_pct = change(out.phase12_mse);
    out.clusters = static_cast<double>(result.task_partition.size());
    out.reduced_features = reduced / static_cast<double>(result.task_partition.size());
    return out;
}

RunMetrics evaluate_run(const SynthConfig& config, std::uint64_t seed, AggregationResult* result) {
    SynthData data = generate(config, seed);
    Centered train = center(data.train);
    Dataset test = center_with(data.test, train.means);
    AggregationOptions options;
    options.candidate_mean = config.candidate_mean;
    AggregationResult agg = nonlin_ctfa(train.data, config.epsilon1, config.epsilon2, seed, options);
    RunMetrics m = score_result(train.data, test, agg);
    if (result != nullptr) *result = std::move(agg);
    return m;
}

const std::vector<std::string>& sweep_metrics() {
    static const std::vector<std::string> names{
        "single_mse",        "phase1_mse",         "phase12_mse", "phase1_change_pct",
        "phase12_change_pct", "clusters",           "reduced_features",
        "single_r2",         "phase1_r2",          "phase12_r2"};
    return names;
}

std::string canonical_axis(const std::string& axis) {
    static const std::map<std::string, std::string> aliases{
        {"n_train", "n_train"}, {"samples", "n_train"}, {"n", "n_train"},   {"D", "features"},
        {"features", "features"}, {"L", "tasks"},       {"tasks", "tasks"}, {"sigma", "sigma"},
        {"epsilon1", "epsilon1"}, {"epsilon2", "epsilon2"}};
    auto it = aliases.find(axis);
    if (it == aliases.end()) {
        throw ValidationError("unknown sweep axis '" + axis +
                              "' (expected n_train, features, tasks, sigma, epsilon1 or epsilon2)");
    }
    return it->second;
}

SynthConfig with_axis_value(const SynthConfig& base, const std::string& axis, double value) {
    SynthConfig c = base;
    const std::string a = canonical_axis(axis);
    auto count = [&](const char* name) {
        if (!(value >= 1.0) || value != std::floor(value)) {
            throw ValidationError(std::string(name) + " must be a positive integer");
        }
        return static_cast<Eigen::Index>(value);
    };
    if (a == "n_train") {
        c.n_train = count("n_train");
        c.n_test = c.n_train;
    } else if (a == "features") {
        c.features = count("features");
    } else if (a == "tasks") {
        c.tasks = count("tasks");
        c.task_groups.clear();
        if (c.noise_correlation.size() != 0) c.noise_correlation.resize(0, 0);
    } else if (a == "sigma") {
        c.sigma = value;
    } else if (a == "epsilon1") {
        c.epsilon1 = value;
    } else {
        c.epsilon2 = value;
    }
    c.validate();
    return c;
}

std::vector<std::vector<RunMetrics>> sweep_runs(const SynthConfig& base, const std::string& axis,
                                                const std::vector<double>& values, std::uint64_t base_seed,
                                                unsigned jobs) {
    std::vector<SynthConfig> configs;
    for (double v : values) configs.push_back(with_axis_value(base, axis, v));
    const std::size_t repeats = base.n_repeats;
    std::vector<std::vector<RunMetrics>> runs(values.size(), std::vector<RunMetrics>(repeats));
    parallel_for(values.size() * repeats, jobs, [&](std::size_t k) {
        const std::size_t v = k / repeats, r = k % repeats;
        runs[v][r] = evaluate_run(configs[v], base_seed + r);
    });
    return runs;
}

std::vector<SweepRow> sweep(const SynthConfig& base, const std::string& axis, const std::vector<double>& values,
                            std::uint64_t base_seed, unsigned jobs) {
    const std::string a = canonical_axis(axis);
    const auto runs = sweep_runs(base, a, values, base_seed, jobs);
    std::vector<SweepRow> rows;
    for (std::size_t v = 0; v < values.size(); ++v) {
        auto column = [&](double RunMetrics::*field) {
            std::vector<double> xs;
            for (const auto& m : runs[v]) xs.push_back(m.*field);
            return xs;
        };
        const std::vector<double RunMetrics::*> fields{
            &RunMetrics::single_mse,         &RunMetrics::phase1_mse, &RunMetrics::phase12_mse,
            &RunMetrics::phase1_change_pct,  &RunMetrics::phase12_change_pct,
            &RunMetrics::clusters,           &RunMetrics::reduced_features,
            &RunMetrics::single_r2,          &RunMetrics::phase1_r2,  &RunMetrics::phase12_r2};
        for (std::size_t f = 0; f < fields.size(); ++f) {
            const auto xs = column(fields[f]);
            rows.push_back(SweepRow{a, values[v], sweep_metrics()[f], mean_of(xs), std_of(xs), xs.size()});
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "axis,value,metric,mean,std,repeats\n";
    for (const auto& r : rows) {
        out << r.axis << ',' << format_number(r.value) << ',' << r.metric << ',' << format_number(r.mean) << ','
            << format_number(r.std) << ',' << r.repeats << '\n';
    }
    return out.str();
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << sweep_csv(rows);
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace taskagg
