#include "taskagg/error.hpp"
#include "taskagg/verify.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace taskagg;

namespace {

VerifyBudget small_budget() {
    VerifyBudget b;
    b.replicates = 100;
    b.covariance_replicates = 500;
    b.n_eval = 2000;
    b.n_pop = 20000;
    b.draws = 5;
    return b;
}

}  // namespace

TEST(Verify, ListsChecksAndRejectsUnknownNames) {
    const auto& names = available_checks();
    EXPECT_GE(names.size(), 10u);
    EXPECT_NE(std::find(names.begin(), names.end(), "variance_reduction"), names.end());
    EXPECT_THROW(run_check("nope", small_budget()), ValidationError);
    EXPECT_THROW(run_checks({"variance_reduction", "nope"}, small_budget()), ValidationError);
}

TEST(Verify, ReportSerialisesRequiredFields) {
    const CheckReport r = run_check("noise_variance", small_budget());
    EXPECT_TRUE(r.pass);
    const auto j = to_json(r);
    for (const char* key : {"check", "theoretical", "empirical", "standard_error", "pass", "replicates"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
}

TEST(Verify, CheapChecksPassOnSmallBudget) {
    for (const char* name : {"decomposition", "coefficient_covariance", "feature_merge_counterexample", "task_merge_orthogonal"}) {
        const CheckReport r = run_check(name, small_budget());
        EXPECT_TRUE(r.pass) << name << ": " << r.detail;
    }
}

TEST(MergeTrials, DuplicateFeaturesOnlyMergeWithoutLoss) {
    FeatureTrialConfig c;
    c.n_pop = 20000;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto t = feature_merge_trial(c, seed);
        EXPECT_EQ(t.merges, 3u);
        EXPECT_EQ(t.features, 6u);
        EXPECT_NEAR(t.mse.difference, 0.0, 1e-10);
        EXPECT_TRUE(t.not_worse);
    }
}

TEST(MergeTrials, AntisymmetricCounterexample) {
    const auto out = antisymmetric_counterexample(0.0, 1);
    EXPECT_FALSE(out.accepted);
    EXPECT_GT(out.gap, 0.9);
}

TEST(MergeTrials, OrthogonalTasksAreNotMerged) {
    TargetTrialConfig c;
    c.orthogonal = true;
    c.sigma = 0.5;
    c.replicates = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_FALSE(target_merge_trial(c, seed).accepted);
}
