#include "taskagg/result.hpp"

#include "taskagg/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace taskagg {

namespace {

using nlohmann::json;

json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double number_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return kUnset;
    return j.at(key).get<double>();
}

}  // namespace

const char* variant_name(Variant v) {
    return v == Variant::Shared ? "shared" : "homogeneous";
}

Variant variant_from(const std::string& s) {
    if (s == "shared") return Variant::Shared;
    if (s == "homogeneous") return Variant::Homogeneous;
    throw ValidationError("unknown variant '" + s + "'");
}

const char* candidate_mean_name(CandidateMean m) {
    return m == CandidateMean::Pairwise ? "pairwise" : "flat";
}

CandidateMean candidate_mean_from(const std::string& s) {
    if (s == "pairwise") return CandidateMean::Pairwise;
    if (s == "flat") return CandidateMean::Flat;
    throw ValidationError("unknown candidate_mean '" + s + "'");
}

std::size_t AggregationResult::comparisons(int phase) const {
    std::size_t count = 0;
    for (const auto& r : trace) count += (r.phase == phase) ? 1 : 0;
    return count;
}

json to_json(const ThresholdReport& r) {
    json j;
    j["phase"] = r.phase;
    j["candidate_pair"] = {r.cluster_id, r.candidate};
    j["members"] = r.members;
    j["task_cluster"] = r.task_cluster ? json(*r.task_cluster) : json(nullptr);
    j["r_P"] = number_or_null(r.r_P);
    j["r_j"] = number_or_null(r.r_j);
    j["r_ag"] = number_or_null(r.r_ag);
    j["var_P"] = number_or_null(r.var_P);
    j["var_j"] = number_or_null(r.var_j);
    j["var_ag"] = number_or_null(r.var_ag);
    j["varf_P"] = number_or_null(r.varf_P);
    j["varf_j"] = number_or_null(r.varf_j);
    j["varf_ag"] = number_or_null(r.varf_ag);
    j["threshold1"] = number_or_null(r.threshold1);
    j["threshold2"] = number_or_null(r.threshold2);
    j["r_gap"] = number_or_null(r.r_gap);
    j["flat_mean_gap"] = number_or_null(r.flat_mean_gap);
    j["epsilon"] = number_or_null(r.epsilon);
    j["accepted"] = r.accepted;
    j["diagnostic"] = r.diagnostic;
    return j;
}

ThresholdReport threshold_report_from_json(const json& j) {
    ThresholdReport r;
    r.phase = j.at("phase").get<int>();
    if (r.phase != 1 && r.phase != 2) throw ValidationError("trace record has invalid phase");
    const auto& pair = j.at("candidate_pair");
    if (!pair.is_array() || pair.size() != 2) throw ValidationError("candidate_pair must have 2 entries");
    r.cluster_id = pair[0].get<std::size_t>();
    r.candidate = pair[1].get<std::size_t>();
    r.members = j.at("members").get<std::vector<std::size_t>>();
    if (j.contains("task_cluster") && !j.at("task_cluster").is_null()) {
        r.task_cluster = j.at("task_cluster").get<std::size_t>();
    }
    r.r_P = number_from(j, "r_P");
    r.r_j = number_from(j, "r_j");
    r.r_ag = number_from(j, "r_ag");
    r.var_P = number_from(j, "var_P");
    r.var_j = number_from(j, "var_j");
    r.var_ag = number_from(j, "var_ag");
    r.varf_P = number_from(j, "varf_P");
    r.varf_j = number_from(j, "varf_j");
    r.varf_ag = number_from(j, "varf_ag");
    r.threshold1 = number_from(j, "threshold1");
    r.threshold2 = number_from(j, "threshold2");
    r.r_gap = number_from(j, "r_gap");
    r.flat_mean_gap = number_from(j, "flat_mean_gap");
    r.epsilon = number_from(j, "epsilon");
    r.accepted = j.at("accepted").get<bool>();
    r.diagnostic = j.value("diagnostic", std::string{});
    return r;
}

json to_json(const AggregationResult& result) {
    json j;
    j["variant"] = variant_name(result.variant);
    j["candidate_mean"] = candidate_mean_name(result.candidate_mean);
    j["seed"] = result.seed;
    j["epsilon1"] = number_or_null(result.epsilon1);
    j["epsilon2"] = number_or_null(result.epsilon2);
    j["task_order"] = result.task_order;
    j["task_clusters"] = result.task_partition.clusters();
    json features = json::array();
    for (const auto& p : result.feature_partitions) features.push_back(p.clusters());
    j["feature_clusters"] = std::move(features);
    json trace = json::array();
    for (const auto& r : result.trace) trace.push_back(to_json(r));
    j["trace"] = std::move(trace);
    return j;
}

AggregationResult aggregation_result_from_json(const json& j) {
    try {
        AggregationResult result;
        result.variant = variant_from(j.value("variant", std::string{"shared"}));
        result.candidate_mean = candidate_mean_from(j.value("candidate_mean", std::string{"pairwise"}));
        result.seed = j.at("seed").get<std::uint64_t>();
        result.epsilon1 = number_from(j, "epsilon1");
        result.epsilon2 = number_from(j, "epsilon2");
        result.task_order = j.value("task_order", std::vector<std::size_t>{});

        auto task_clusters = j.at("task_clusters").get<std::vector<Cluster>>();
        std::size_t tasks = 0;
        for (const auto& c : task_clusters) tasks += c.size();
        result.task_partition = Partition(std::move(task_clusters), tasks);

        for (const auto& fc : j.at("feature_clusters")) {
            auto clusters = fc.get<std::vector<Cluster>>();
            std::size_t features = 0;
            for (const auto& c : clusters) features += c.size();
            result.feature_partitions.emplace_back(std::move(clusters), features);
        }
        if (result.feature_partitions.size() != result.task_partition.size()) {
            throw ValidationError("feature_clusters must have one entry per task cluster");
        }
        for (const auto& r : j.at("trace")) result.trace.push_back(threshold_report_from_json(r));
        return result;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed result JSON: ") + e.what());
    }
}

std::string dump_result(const AggregationResult& result) {
    return to_json(result).dump(2) + "\n";
}

AggregationResult parse_result(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("result is not valid JSON: ") + e.what());
    }
    return aggregation_result_from_json(j);
}

void save_result(const std::filesystem::path& path, const AggregationResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << dump_result(result);
    if (!out) throw IoError("failed writing " + path.string());
}

AggregationResult load_result(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_result(buffer.str());
}

}  // namespace taskagg
