#pragma once

#include "taskagg/partition.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace taskagg {

inline constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

/// Every scalar of one merge test. Phase 1 fills the target-test fields and
/// threshold1/threshold2; phase 2 fills r_P (= R_sep), r_ag (= R_aggr), the
/// matching residual/explained variances and r_gap. Unused fields stay NaN
/// and serialise as null.
struct ThresholdReport {
    int phase = 1;
    std::size_t cluster_id = 0;               // creation index of the cluster under construction
    std::size_t candidate = 0;                // item tested for inclusion
    std::vector<std::size_t> members;         // cluster members at test time, sorted
    std::optional<std::size_t> task_cluster;  // phase 2: index of the owning task cluster

    double r_P = kUnset, r_j = kUnset, r_ag = kUnset;
    double var_P = kUnset, var_j = kUnset, var_ag = kUnset;
    double varf_P = kUnset, varf_j = kUnset, varf_ag = kUnset;
    double threshold1 = kUnset, threshold2 = kUnset;
    double r_gap = kUnset;

    // max |tested candidate column - flat mean of members plus candidate|;
    // zero for singleton clusters, nonzero when the pairwise mean is used.
    double flat_mean_gap = 0.0;

    double epsilon = 0.0;
    bool accepted = false;
    std::string diagnostic;
};

enum class Variant { Shared, Homogeneous };

/// Column tested when a candidate joins a cluster of size >= 2.
///   Pairwise: (running cluster mean + candidate) / 2, as in the loop's test step.
///   Flat:     mean over all members plus the candidate, which is the column
///             the cluster would actually output after the merge.
/// Both give the same column for singleton clusters.
enum class CandidateMean { Pairwise, Flat };

const char* variant_name(Variant v);
Variant variant_from(const std::string& name);  // "shared" or "homogeneous"
const char* candidate_mean_name(CandidateMean m);
CandidateMean candidate_mean_from(const std::string& name);  // "pairwise" or "flat"

struct AggregationResult {
    Variant variant = Variant::Shared;
    CandidateMean candidate_mean = CandidateMean::Pairwise;
    std::uint64_t seed = 0;
    double epsilon1 = 0.0;
    double epsilon2 = 0.0;                     // NaN for the homogeneous variant
    std::vector<std::size_t> task_order;       // seed-shuffled order used by the task loop
    Partition task_partition;
    std::vector<Partition> feature_partitions;  // one per task cluster
    std::vector<ThresholdReport> trace;

    std::size_t comparisons(int phase) const;
};

nlohmann::json to_json(const ThresholdReport& report);
ThresholdReport threshold_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AggregationResult& result);
AggregationResult aggregation_result_from_json(const nlohmann::json& j);

/// Canonical serialised form (2-space indent, trailing newline).
std::string dump_result(const AggregationResult& result);
AggregationResult parse_result(const std::string& text);

void save_result(const std::filesystem::path& path, const AggregationResult& result);
AggregationResult load_result(const std::filesystem::path& path);

}  // namespace taskagg
