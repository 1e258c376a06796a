#include "helpers.hpp"

#include "taskagg/error.hpp"
#include "taskagg/linstats.hpp"
#include "taskagg/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace taskagg;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.tasks = 4;
    c.features = 10;
    c.n_train = 60;
    c.n_test = 60;
    c.sigma = 1.0;
    c.n_repeats = 3;
    return c;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST(SynthConfig, ValidatesFields) {
    SynthConfig c = small_config();
    EXPECT_NO_THROW(c.validate());
    c.sigma = -1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = small_config();
    c.noise_correlation = Eigen::Matrix2d::Identity();
    EXPECT_THROW(c.validate(), ValidationError);
    c.noise_correlation = equicorrelation(4, -0.9);
    EXPECT_THROW(c.validate(), ValidationError);
    c = small_config();
    c.intervals = {{1.0, 0.5}};
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(SynthConfig, GroupsSplitEvenlyWithExtraTaskInFirstGroup) {
    SynthConfig c = small_config();
    c.tasks = 5;
    EXPECT_EQ(c.groups(), (std::vector<std::size_t>{0, 0, 0, 1, 1}));
}

TEST(SynthConfig, JsonRoundTrip) {
    SynthConfig c = small_config();
    c.noise_correlation = equicorrelation(4, 0.25);
    c.feature_correlation = 0.1;
    const SynthConfig back = synth_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_THROW(synth_config_from_json(nlohmann::json{{"bogus", 1}}), ValidationError);
    EXPECT_THROW(synth_config_from_json(nlohmann::json{{"tasks", "ten"}}), ValidationError);
}

TEST(Generate, IsDeterministicGivenSeed) {
    const SynthData a = generate(small_config(), 17);
    const SynthData b = generate(small_config(), 17);
    EXPECT_EQ(a.train.features(), b.train.features());
    EXPECT_EQ(a.train.targets(), b.train.targets());
    EXPECT_EQ(a.test.targets(), b.test.targets());
    EXPECT_EQ(a.truth.coefficients, b.truth.coefficients);
}

TEST(Generate, DisjointSeedsAreUncorrelated) {
    SynthConfig c = small_config();
    c.n_train = 250;
    const SynthData a = generate(c, 1);
    const SynthData b = generate(c, 2);
    for (Eigen::Index k = 0; k < c.features; ++k) {
        const auto m = moments(a.train.features().col(k), b.train.features().col(k));
        EXPECT_LT(std::abs(m.correlation.value()), 0.25);
    }
    double total = 0.0;
    for (Eigen::Index k = 0; k < c.features; ++k) {
        total += std::abs(moments(a.train.features().col(k), b.train.features().col(k)).correlation.value());
    }
    EXPECT_LT(total / static_cast<double>(c.features), 0.1);
}

TEST(Generate, CoefficientsLieInGroupIntervals) {
    const SynthConfig c = small_config();
    const SynthData d = generate(c, 3);
    const auto groups = c.groups();
    for (Eigen::Index t = 0; t < c.tasks; ++t) {
        const auto& iv = c.intervals[groups[static_cast<std::size_t>(t)]];
        EXPECT_GE(d.truth.coefficients.col(t).minCoeff(), iv.low);
        EXPECT_LE(d.truth.coefficients.col(t).maxCoeff(), iv.high);
    }
    EXPECT_GT(cosine(d.truth.coefficients.col(0), d.truth.coefficients.col(1)), 0.0);
    EXPECT_LT(cosine(d.truth.coefficients.col(0), d.truth.coefficients.col(3)), 0.0);
}

TEST(Generate, TargetsAreSignalPlusStoredNoise) {
    const SynthData d = generate(small_config(), 4);
    const Eigen::MatrixXd expected = d.truth.signal(d.train.features()) + d.truth.train_noise;
    EXPECT_LE((d.train.targets() - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NE(d.truth.train_noise.row(0), d.truth.test_noise.row(0));
}

TEST(Generate, NoiselessTargetsHaveUnitR2) {
    SynthConfig c = small_config();
    c.sigma = 0.0;
    const SynthData d = generate(c, 5);
    const Eigen::MatrixXd pred = d.truth.signal(d.test.features());
    for (Eigen::Index t = 0; t < c.tasks; ++t) {
        const Eigen::VectorXd y = d.test.targets().col(t);
        EXPECT_NEAR(1.0 - mse(pred.col(t), y) / sample_variance(y), 1.0, 1e-10);
    }
}

TEST(Generate, NoiseCovarianceMatchesConfig) {
    SynthConfig c = small_config();
    c.tasks = 3;
    c.features = 2;
    c.n_train = 100000;
    c.n_test = 2;
    c.sigma = 2.0;
    c.noise_correlation.resize(3, 3);
    c.noise_correlation << 1.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 1.0;
    const SynthData d = generate(c, 6);
    const Eigen::MatrixXd E = testutil::centered(d.truth.train_noise);
    const Eigen::MatrixXd cov = E.transpose() * E / static_cast<double>(E.rows() - 1);
    const Eigen::MatrixXd expected = 4.0 * c.noise_correlation;
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            EXPECT_LE(std::abs(cov(i, j) - expected(i, j)), 0.05 * std::abs(expected(i, j))) << i << "," << j;
        }
    }
}

TEST(Generate, FeatureCorrelationIsApplied) {
    SynthConfig c = small_config();
    c.n_train = 20000;
    c.feature_correlation = 0.4;
    const SynthData d = generate(c, 7);
    const auto m = moments(d.train.features().col(0), d.train.features().col(5));
    EXPECT_NEAR(m.correlation.value(), 0.4, 0.03);
    EXPECT_NEAR(m.variance_a, 1.0, 0.05);
}

TEST(Reference, CalibratedToSingleTaskR2) {
    const SynthConfig c = SynthConfig::reference();
    EXPECT_EQ(c.tasks, 10);
    EXPECT_EQ(c.features, 100);
    EXPECT_EQ(c.n_train, 250);
    EXPECT_DOUBLE_EQ(c.sigma, 10.0);
    EXPECT_DOUBLE_EQ(c.epsilon2, 1e-4);
    EXPECT_NEAR(expected_single_task_r2(c), 0.48, 1e-12);
    EXPECT_GT(c.feature_correlation, 0.0);
    EXPECT_LT(c.feature_correlation, 0.05);
}

TEST(Reference, SingleTaskR2OverTenSeeds) {
    const SynthConfig c = SynthConfig::reference();
    double r2 = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) r2 += evaluate_run(c, s).single_r2 / 10.0;
    EXPECT_NEAR(r2, 0.48, 0.05);
}

TEST(EvaluateRun, MetricsAreConsistent) {
    AggregationResult result;
    const RunMetrics m = evaluate_run(small_config(), 8, &result);
    EXPECT_EQ(m.clusters, static_cast<double>(result.task_partition.size()));
    EXPECT_NEAR(m.phase1_change_pct, 100.0 * (m.phase1_mse - m.single_mse) / m.single_mse, 1e-9);
    EXPECT_GE(m.reduced_features, 1.0);
    EXPECT_LE(m.reduced_features, 10.0);
}

TEST(Sweep, UnknownAxisIsRejected) {
    EXPECT_THROW(sweep(small_config(), "gamma", {1.0}), ValidationError);
    EXPECT_THROW(with_axis_value(small_config(), "tasks", 2.5), ValidationError);
    EXPECT_EQ(canonical_axis("D"), "features");
    EXPECT_EQ(canonical_axis("L"), "tasks");
    EXPECT_EQ(with_axis_value(small_config(), "n_train", 80).n_test, 80);
}

TEST(Sweep, NegativeEpsilonEndpointEqualsSingleTask) {
    const auto runs = sweep_runs(small_config(), "epsilon1", {-1e6}, 0);
    for (const auto& m : runs[0]) {
        EXPECT_EQ(m.clusters, 4.0);
        EXPECT_NEAR(m.phase1_mse, m.single_mse, 1e-9);
    }
}

TEST(Sweep, NoiselessFloor) {
    const auto runs = sweep_runs(small_config(), "sigma", {0.0}, 0);
    for (const auto& m : runs[0]) {
        EXPECT_LT(m.single_mse, 1e-20);
        EXPECT_LT(m.phase1_mse, 1e-20);
        EXPECT_EQ(m.phase1_change_pct, 0.0);
    }
}

TEST(Sweep, RowsAndCsvLayout) {
    const auto rows = sweep(small_config(), "sigma", {0.5, 1.0}, 0, 2);
    ASSERT_EQ(rows.size(), 2 * sweep_metrics().size());
    EXPECT_EQ(rows.front().axis, "sigma");
    EXPECT_EQ(rows.front().repeats, 3u);
    const std::string csv = sweep_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "axis,value,metric,mean,std,repeats");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(rows.size() + 1));
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
    EXPECT_EQ(sweep_csv(sweep(small_config(), "epsilon2", {0.0, 0.01}, 3, 1)),
              sweep_csv(sweep(small_config(), "epsilon2", {0.0, 0.01}, 3, 4)));
}

TEST(Sweep, MoreSamplesLowerSingleTaskError) {
    SynthConfig c = small_config();
    c.features = 20;
    c.sigma = 3.0;
    const auto rows = sweep(c, "n_train", {30, 60, 150, 600}, 0);
    std::vector<double> mse;
    for (const auto& r : rows) {
        if (r.metric == "single_mse") mse.push_back(r.mean);
    }
    ASSERT_EQ(mse.size(), 4u);
    for (std::size_t k = 1; k < mse.size(); ++k) EXPECT_LT(mse[k], mse[k - 1]);
}
