#include "helpers.hpp"

#include "taskagg/dataset.hpp"
#include "taskagg/linstats.hpp"
#include "taskagg/result.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using testutil::TempDir;

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(TASKAGG_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        ASSERT_EQ(run("synth --tasks 4 --features 6 --samples 80 --sigma 1 --seed 3 --out " + quoted(dir / "data"),
                      dir / "synth.log"),
                  0)
            << read_file(dir / "synth.log");
    }
    std::string aggregate_args(const std::string& out) const {
        return "aggregate --input " + quoted(dir / "data" / "train.csv") + " --targets y0,y1,y2,y3 --out " +
               quoted(dir / out);
    }
    TempDir dir{"cli"};
};

}  // namespace

TEST_F(Cli, SynthWritesSplitsAndTruth) {
    EXPECT_TRUE(std::filesystem::exists(dir / "data" / "train.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "data" / "test.csv"));
    const auto truth = nlohmann::json::parse(read_file(dir / "data" / "truth.json"));
    EXPECT_EQ(truth["seed"], 3);
    EXPECT_EQ(truth["coefficients"].size(), 4u);
}

TEST_F(Cli, AggregateWritesResultClustersAndSummary) {
    ASSERT_EQ(run(aggregate_args("out"), dir / "agg.log"), 0) << read_file(dir / "agg.log");
    const auto result = taskagg::load_result(dir / "out" / "result.json");
    for (std::size_t c = 0; c < result.task_partition.size(); ++c) {
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / ("cluster_" + std::to_string(c) + ".csv")));
    }
    const std::string summary = read_file(dir / "out" / "summary.txt");
    EXPECT_NE(summary.find("r2_before"), std::string::npos);
    EXPECT_EQ(read_file(dir / "agg.log"), summary);
}

TEST_F(Cli, QuietSuppressesSummary) {
    ASSERT_EQ(run(aggregate_args("out") + " --quiet", dir / "agg.log"), 0);
    EXPECT_TRUE(read_file(dir / "agg.log").empty());
}

TEST_F(Cli, LargeEpsilonGivesOneTaskCluster) {
    ASSERT_EQ(run(aggregate_args("big") + " --epsilon1 1e6", dir / "agg.log"), 0) << read_file(dir / "agg.log");
    const auto j = nlohmann::json::parse(read_file(dir / "big" / "result.json"));
    EXPECT_EQ(j["task_clusters"].size(), 1u);
}

TEST_F(Cli, SameSeedGivesByteIdenticalJson) {
    ASSERT_EQ(run(aggregate_args("a") + " --seed 5", dir / "a.log"), 0);
    ASSERT_EQ(run(aggregate_args("b") + " --seed 5", dir / "b.log"), 0);
    EXPECT_EQ(read_file(dir / "a" / "result.json"), read_file(dir / "b" / "result.json"));
    EXPECT_EQ(read_file(dir / "a" / "cluster_0.csv"), read_file(dir / "b" / "cluster_0.csv"));
}

TEST_F(Cli, HomogeneousVariant) {
    write_file(dir / "h.csv", "u@a,v@a,u@b,v@b,a,b\n1,2,1,2,3,3\n2,1,2,1,3,3\n0,0,0,0,0,0\n3,1,3,1,4,4\n");
    ASSERT_EQ(run("aggregate --variant homogeneous --input " + quoted(dir / "h.csv") + " --targets a,b --out " +
                      quoted(dir / "h"),
                  dir / "h.log"),
              0)
        << read_file(dir / "h.log");
    const auto j = nlohmann::json::parse(read_file(dir / "h" / "result.json"));
    EXPECT_EQ(j["variant"], "homogeneous");
    EXPECT_EQ(j["task_clusters"].size(), 1u);
}

TEST_F(Cli, ExitCodesAndConstantTarget) {
    EXPECT_EQ(run("aggregate --input " + quoted(dir / "missing.csv") + " --targets y --out " + quoted(dir / "x"),
                  dir / "e.log"),
              4);
    write_file(dir / "nan.csv", "a,b,y\n1,2,3\n4,NaN,6\n");
    EXPECT_EQ(run("aggregate --input " + quoted(dir / "nan.csv") + " --targets y --out " + quoted(dir / "x"),
                  dir / "e.log"),
              1);
    EXPECT_NE(read_file(dir / "e.log").find("line 3"), std::string::npos);
    write_file(dir / "const.csv", "a,b,y\n1,2,5\n4,1,5\n2,2,5\n");
    EXPECT_EQ(run("aggregate --input " + quoted(dir / "const.csv") + " --targets y --out " + quoted(dir / "x"),
                  dir / "e.log"),
              0);
    EXPECT_NE(read_file(dir / "e.log").find("constant columns set to zero: y"), std::string::npos);
    EXPECT_EQ(run("aggregate --bogus", dir / "e.log"), 1);
    EXPECT_EQ(run("sweep --axis gamma --values 1", dir / "e.log"), 1);
    EXPECT_EQ(run("verify --checks nope", dir / "e.log"), 1);
}

TEST_F(Cli, VerifyWritesReport) {
    ASSERT_EQ(run("verify --checks noise_variance,feature_merge_counterexample --out " + quoted(dir / "v.json"), dir / "v.log"),
              0)
        << read_file(dir / "v.log");
    const auto j = nlohmann::json::parse(read_file(dir / "v.json"));
    ASSERT_EQ(j.size(), 2u);
    EXPECT_EQ(j[0]["check"], "noise_variance");
    EXPECT_TRUE(j[1]["pass"].get<bool>());
}

TEST_F(Cli, VerifyFailureExitsThree) {
    // five noise redraws cannot reach 10 percent
    EXPECT_EQ(run("verify --checks coefficient_covariance --covariance-replicates 5 --quiet --out " + quoted(dir / "v.json"),
                  dir / "v.log"),
              3);
}

TEST_F(Cli, SweepWritesCsv) {
    ASSERT_EQ(run("sweep --axis n_train --values 50,100,250,1000 --repeats 2 --iid --out " + quoted(dir / "s.csv"),
                  dir / "s.log"),
              0)
        << read_file(dir / "s.log");
    std::istringstream in(read_file(dir / "s.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "axis,value,metric,mean,std,repeats");
    std::vector<double> single;
    while (std::getline(in, line)) {
        if (line.find(",single_mse,") != std::string::npos) {
            const auto a = line.find(",single_mse,") + 12;
            single.push_back(std::stod(line.substr(a, line.find(',', a) - a)));
        }
    }
    ASSERT_EQ(single.size(), 4u);
    EXPECT_GT(single[1], single[2]);
    EXPECT_GT(single[2], single[3]);
}

TEST_F(Cli, NoiselessSynthIsFitPerfectly) {
    ASSERT_EQ(run("synth --tasks 2 --features 5 --samples 40 --sigma 0 --out " + quoted(dir / "clean"), dir / "c.log"),
              0);
    const auto d = taskagg::load_dataset(dir / "clean" / "train.csv",
                                         taskagg::Schema::targets_rest_features({"y0", "y1"}));
    const auto c = taskagg::center(d);
    EXPECT_NEAR(taskagg::r2_score(c.data.features(), c.data.targets().col(0)), 1.0, 1e-10);
}
