// taskagg: command-line front end for the aggregation library.
//
// Exit status: 0 success, 1 invalid input or flags, 2 numerical failure,
// 3 failed verification check, 4 file I/O failure.

#include "taskagg/aggregation.hpp"
#include "taskagg/dataset.hpp"
#include "taskagg/error.hpp"
#include "taskagg/linstats.hpp"
#include "taskagg/result.hpp"
#include "taskagg/synth.hpp"
#include "taskagg/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace taskagg;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2, kVerification = 3, kIo = 4 };

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::string join(const std::vector<std::string>& names, const Cluster& members, const char* sep) {
    std::string s;
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (k > 0) s += sep;
        s += names[members[k]];
    }
    return s;
}

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

double r2_or_nan(const Eigen::VectorXd& fitted, const Eigen::VectorXd& y) {
    const double vy = sample_variance(y);
    if (vy == 0.0) return std::nan("");
    return 1.0 - sample_variance(y - fitted) / vy;
}

// ---- aggregate ------------------------------------------------------------

struct AggregateArgs {
    std::string input;
    std::vector<std::string> targets;
    std::vector<std::string> ignore;
    double epsilon1 = 0.0;
    double epsilon2 = 1e-4;
    std::uint64_t seed = kDefaultSeed;
    std::string variant = "shared";
    std::string candidate_mean = "pairwise";
    std::string out = "taskagg_out";
    bool quiet = false;
};

std::string aggregate_summary(const Dataset& centered, const AggregationResult& result,
                              const std::vector<ReducedTask>& reduced, const std::vector<std::string>& constant) {
    const auto& tnames = centered.target_names();
    std::ostringstream s;
    s << "variant " << variant_name(result.variant) << ", seed " << result.seed << ", epsilon1 "
      << shortest(result.epsilon1);
    if (result.variant == Variant::Shared) s << ", epsilon2 " << shortest(result.epsilon2);
    s << "\n";
    s << result.task_partition.size() << " task clusters from " << centered.task_count() << " tasks, "
      << centered.feature_count() << " features\n";
    if (!constant.empty()) {
        s << "constant columns set to zero:";
        for (const auto& c : constant) s << ' ' << c;
        s << "\n";
    }
    for (std::size_t c = 0; c < result.task_partition.size(); ++c) {
        s << "cluster " << c << ": " << result.task_partition[c].size() << " tasks ["
          << join(tnames, result.task_partition[c], ", ") << "], " << reduced[c].features.cols()
          << " features\n";
    }
    s << "task\tcluster\tr2_before\tr2_after\n";
    for (Eigen::Index t = 0; t < centered.task_count(); ++t) {
        const std::size_t c = result.task_partition.cluster_of(static_cast<std::size_t>(t));
        const Eigen::VectorXd y = centered.targets().col(t);
        const Eigen::MatrixXd& X = centered.has_per_task_features()
                                       ? centered.per_task_features()[static_cast<std::size_t>(t)]
                                       : centered.features();
        const Eigen::VectorXd before = X * LeastSquares(X).solve(y);
        const Eigen::VectorXd after = reduced[c].features * LeastSquares(reduced[c].features).solve(reduced[c].target);
        s << tnames[static_cast<std::size_t>(t)] << '\t' << c << '\t' << fixed(r2_or_nan(before, y)) << '\t'
          << fixed(r2_or_nan(after, y)) << "\n";
    }
    return s.str();
}

void write_reduced_csv(const fs::path& path, const Dataset& raw, const AggregationResult& result,
                       const ReducedTask& task, std::size_t cluster) {
    std::vector<std::string> header;
    if (result.variant == Variant::Shared) {
        const Partition& fp = result.feature_partitions[cluster];
        for (const auto& members : fp.clusters()) {
            header.push_back(members.size() == 1 ? raw.feature_names()[members[0]]
                                                 : "mean(" + join(raw.feature_names(), members, "+") + ")");
        }
    } else {
        for (Eigen::Index k = 0; k < task.features.cols(); ++k) {
            header.push_back(raw.feature_names()[static_cast<std::size_t>(k)]);
        }
    }
    header.push_back(task.tasks.size() == 1 ? raw.target_names()[task.tasks[0]]
                                            : "mean(" + join(raw.target_names(), task.tasks, "+") + ")");
    std::ostringstream out;
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    out << "\n";
    for (Eigen::Index r = 0; r < task.target.size(); ++r) {
        for (Eigen::Index k = 0; k < task.features.cols(); ++k) out << shortest(task.features(r, k)) << ',';
        out << shortest(task.target(r)) << "\n";
    }
    write_text(path, out.str());
}

int run_aggregate(const AggregateArgs& a) {
    const Variant variant = variant_from(a.variant);
    const CandidateMean cm = candidate_mean_from(a.candidate_mean);
    if (a.targets.empty()) throw ValidationError("--targets must name at least one column");
    const Schema schema = variant == Variant::Shared
                              ? Schema::targets_rest_features(a.targets, a.ignore)
                              : Schema::homogeneous(a.targets, read_csv_header(a.input));
    const Dataset raw = load_dataset(a.input, schema);
    const Centered centered = center(raw);
    AggregationOptions options;
    options.candidate_mean = cm;
    const AggregationResult result = variant == Variant::Shared
                                         ? nonlin_ctfa(centered.data, a.epsilon1, a.epsilon2, a.seed, options)
                                         : nonlin_ctfa_homogeneous(centered.data, a.epsilon1, a.seed, options);

    const fs::path out(a.out);
    ensure_dir(out);
    save_result(out / "result.json", result);
    const auto reduced_raw = apply_partition(raw, result);
    for (std::size_t c = 0; c < reduced_raw.size(); ++c) {
        write_reduced_csv(out / ("cluster_" + std::to_string(c) + ".csv"), raw, result, reduced_raw[c], c);
    }
    const std::string summary =
        aggregate_summary(centered.data, result, apply_partition(centered.data, result), centered.constant_columns);
    write_text(out / "summary.txt", summary);
    if (!a.quiet) std::cout << summary;
    return kOk;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    std::string config;
    bool reference = false;
    Eigen::Index tasks = 0, features = 0, samples = 0, test_samples = 0;
    double sigma = 0.0, feature_correlation = 0.0;
    std::uint64_t seed = kDefaultSeed;
    std::string out = "synth_out";
    bool quiet = false;
};

SynthConfig load_synth_config(const std::string& path, bool reference) {
    SynthConfig base = reference ? SynthConfig::reference() : SynthConfig{};
    if (path.empty()) return base;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("invalid JSON in " + path + ": " + e.what());
    }
    return synth_config_from_json(j, base);
}

int run_synth(const SynthArgs& a, const CLI::App& app) {
    SynthConfig c = load_synth_config(a.config, a.reference);
    if (app.count("--tasks")) {
        c.tasks = a.tasks;
        c.task_groups.clear();
    }
    if (app.count("--features")) c.features = a.features;
    if (app.count("--samples")) c.n_train = c.n_test = a.samples;
    if (app.count("--test-samples")) c.n_test = a.test_samples;
    if (app.count("--sigma")) c.sigma = a.sigma;
    if (app.count("--feature-correlation")) c.feature_correlation = a.feature_correlation;
    c.validate();

    const SynthData data = generate(c, a.seed);
    const fs::path out(a.out);
    ensure_dir(out);
    save_dataset(out / "train.csv", data.train);
    save_dataset(out / "test.csv", data.test);
    nlohmann::json truth{{"seed", a.seed}, {"config", to_json(c)}, {"groups", data.truth.groups}};
    nlohmann::json coef = nlohmann::json::array();
    for (Eigen::Index t = 0; t < data.truth.coefficients.cols(); ++t) {
        const Eigen::VectorXd col = data.truth.coefficients.col(t);
        coef.push_back(std::vector<double>(col.data(), col.data() + col.size()));
    }
    truth["coefficients"] = coef;
    write_text(out / "truth.json", truth.dump(2) + "\n");
    if (!a.quiet) {
        std::cout << "wrote " << c.tasks << " tasks, " << c.features << " features, " << c.n_train << " train and "
                  << c.n_test << " test rows to " << out.string() << "\n";
    }
    return kOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
    std::string axis;
    std::vector<double> values;
    std::string config;
    bool iid = false;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::string out;
};

int run_sweep(const SweepArgs& a, const CLI::App& app) {
    SynthConfig base = load_synth_config(a.config, !a.iid);
    if (app.count("--repeats")) base.n_repeats = a.repeats;
    base.validate();
    if (a.values.empty()) throw ValidationError("--values must list at least one value");
    const auto rows = sweep(base, a.axis, a.values, a.seed, a.jobs);
    if (a.out.empty()) {
        std::cout << sweep_csv(rows);
    } else {
        write_sweep_csv(a.out, rows);
    }
    return kOk;
}

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
    std::vector<std::string> checks;
    VerifyBudget budget;
    std::string out;
    bool quiet = false;
    bool list = false;
};

int run_verify(const VerifyArgs& a) {
    if (a.list) {
        for (const auto& n : available_checks()) std::cout << n << "\n";
        return kOk;
    }
    const std::vector<std::string> names = a.checks.empty() ? available_checks() : a.checks;
    const auto reports = run_checks(names, a.budget);
    nlohmann::json j = nlohmann::json::array();
    bool ok = true;
    for (const auto& r : reports) {
        j.push_back(to_json(r));
        ok = ok && r.pass;
        if (!a.quiet) {
            std::cerr << (r.pass ? "PASS " : "FAIL ") << r.check << ": empirical " << shortest(r.empirical)
                      << ", theoretical " << shortest(r.theoretical) << ", se " << shortest(r.standard_error)
                      << " (" << r.detail << ")\n";
        }
    }
    const std::string text = j.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        write_text(a.out, text);
    }
    return ok ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase task and feature aggregation for linear multi-task regression"};
    app.require_subcommand(1);

    AggregateArgs agg;
    auto* c_agg = app.add_subcommand("aggregate", "Cluster targets, then features, of a CSV dataset");
    c_agg->add_option("--input,-i", agg.input, "CSV file with a header row")->required();
    c_agg->add_option("--targets,-t", agg.targets, "Target column names")->required()->delimiter(',');
    c_agg->add_option("--ignore", agg.ignore, "Columns to skip")->delimiter(',');
    c_agg->add_option("--epsilon1", agg.epsilon1, "Task-merge tolerance")->capture_default_str();
    c_agg->add_option("--epsilon2", agg.epsilon2, "Feature-merge tolerance")->capture_default_str();
    c_agg->add_option("--seed", agg.seed, "Seed of the task visiting order")->capture_default_str();
    c_agg->add_option("--variant", agg.variant, "shared or homogeneous (columns named feature@target)")
        ->check(CLI::IsMember({"shared", "homogeneous"}))
        ->capture_default_str();
    c_agg->add_option("--candidate-mean", agg.candidate_mean, "pairwise or flat")
        ->check(CLI::IsMember({"pairwise", "flat"}))
        ->capture_default_str();
    c_agg->add_option("--out,-o", agg.out, "Output directory")->capture_default_str();
    c_agg->add_flag("--quiet,-q", agg.quiet, "Do not print the summary");

    SynthArgs syn;
    auto* c_syn = app.add_subcommand("synth", "Generate a synthetic multi-task dataset");
    c_syn->add_option("--config", syn.config, "JSON config file");
    c_syn->add_flag("--reference", syn.reference, "Start from the calibrated reference benchmark");
    c_syn->add_option("--tasks,-L", syn.tasks, "Number of tasks");
    c_syn->add_option("--features,-D", syn.features, "Number of features");
    c_syn->add_option("--samples,-n", syn.samples, "Train rows (test rows default to the same)");
    c_syn->add_option("--test-samples", syn.test_samples, "Test rows");
    c_syn->add_option("--sigma", syn.sigma, "Noise standard deviation");
    c_syn->add_option("--feature-correlation", syn.feature_correlation, "Common feature correlation");
    c_syn->add_option("--seed", syn.seed, "Generator seed")->capture_default_str();
    c_syn->add_option("--out,-o", syn.out, "Output directory")->capture_default_str();
    c_syn->add_flag("--quiet,-q", syn.quiet, "No console output");

    SweepArgs swp;
    auto* c_swp = app.add_subcommand("sweep", "Vary one parameter of the synthetic benchmark");
    c_swp->add_option("--axis", swp.axis, "n_train, features, tasks, sigma, epsilon1 or epsilon2")->required();
    c_swp->add_option("--values", swp.values, "Comma-separated values")->required()->delimiter(',');
    c_swp->add_option("--config", swp.config, "JSON config file for the base benchmark");
    c_swp->add_flag("--iid", swp.iid, "Use uncorrelated features instead of the reference calibration");
    c_swp->add_option("--repeats", swp.repeats, "Seeds per value")->capture_default_str();
    c_swp->add_option("--seed", swp.seed, "First seed")->capture_default_str();
    c_swp->add_option("--jobs,-j", swp.jobs, "Worker threads (0 = all cores)")->capture_default_str();
    c_swp->add_option("--out,-o", swp.out, "CSV path (default stdout)");

    VerifyArgs ver;
    auto* c_ver = app.add_subcommand("verify", "Run the Monte-Carlo verification checks");
    c_ver->add_option("--checks", ver.checks, "Comma-separated check names (default all)")->delimiter(',');
    c_ver->add_flag("--list", ver.list, "List the available checks");
    c_ver->add_option("--replicates", ver.budget.replicates, "Training sets per estimate")->capture_default_str();
    c_ver->add_option("--covariance-replicates", ver.budget.covariance_replicates, "Noise redraws for the fixed-design check")
        ->capture_default_str();
    c_ver->add_option("--n-eval", ver.budget.n_eval, "Evaluation points")->capture_default_str();
    c_ver->add_option("--n-pop", ver.budget.n_pop, "Samples for population quantities")->capture_default_str();
    c_ver->add_option("--draws", ver.budget.draws, "Generator draws for the merge guarantees")->capture_default_str();
    c_ver->add_option("--seed", ver.budget.seed, "Seed")->capture_default_str();
    c_ver->add_option("--jobs,-j", ver.budget.jobs, "Worker threads (0 = all cores)")->capture_default_str();
    c_ver->add_option("--out,-o", ver.out, "JSON report path (default stdout)");
    c_ver->add_flag("--quiet,-q", ver.quiet, "Do not print per-check lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (c_agg->parsed()) return run_aggregate(agg);
        if (c_syn->parsed()) return run_synth(syn, *c_syn);
        if (c_swp->parsed()) return run_sweep(swp, *c_swp);
        if (c_ver->parsed()) return run_verify(ver);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    }
    return kValidation;
}
