#pragma once

#include <json.hpp>

#include "adnn/harness.hpp"
#include "adnn/mazur.hpp"

namespace adnn {

inline nlohmann::ordered_json params_json(const BuildParams& p) {
    nlohmann::ordered_json j;
    j["r"] = p.r;
    j["eps_exponent"] = p.eps_exponent;
    j["c"] = p.c;
    j["d_cal"] = p.d_cal;
    j["k_trees"] = p.k_trees;
    j["level_cap"] = p.level_cap;
    j["leaf_cap"] = p.leaf_cap;
    j["master_seed"] = p.master_seed;
    j["aspect_cap"] = p.aspect_cap;
    j["delta"] = p.delta;
    j["b"] = p.b;
    return j;
}

/// Bench report as versioned JSON. Timing fields are the only
/// non-reproducible part and can be omitted for bit-exact comparison.
inline nlohmann::ordered_json bench_report_json(const BenchReport& r, bool include_timings = true) {
    nlohmann::ordered_json j;
    j["schema_version"] = r.schema_version;
    j["params"] = params_json(r.params);
    j["r_effective"] = r.r_effective;
    j["snowflake_adapted"] = r.snowflake_adapted;
    j["n_queries"] = r.n_queries;
    j["n_answered"] = r.n_answered;
    j["n_no_returnable"] = r.n_no_returnable;
    j["success_rate"] = r.success_rate;
    j["mean_nodes_visited"] = r.mean_nodes_visited;
    j["space_bytes"] = r.space_bytes;
    j["audit_ok"] = r.audit_ok;
    j["audit_violations"] = r.audit_violations;
    nlohmann::ordered_json stats;
    stats["leaf_nodes"] = r.stats.leaf_nodes;
    stats["ball_nodes"] = r.stats.ball_nodes;
    stats["hash_nodes"] = r.stats.hash_nodes;
    stats["max_depth"] = r.stats.max_depth;
    stats["rejection_attempts"] = r.stats.rejection_attempts;
    j["build_stats"] = stats;
    if (include_timings) {
        j["build_seconds"] = r.build_seconds;
        j["query_seconds_total"] = r.query_seconds_total;
        j["query_seconds_p50"] = r.query_seconds_p50;
        j["query_seconds_p95"] = r.query_seconds_p95;
    }
    nlohmann::ordered_json outcomes = nlohmann::ordered_json::array();
    for (const auto& o : r.outcomes) {
        nlohmann::ordered_json oj;
        oj["query"] = o.query_index;
        oj["answered"] = o.answered;
        if (o.answered) {
            oj["returned_index"] = o.returned_index;
            oj["returned_distance"] = o.returned_distance;
            oj["ratio"] = std::isfinite(o.ratio) ? o.ratio : -1.0;
            oj["within_bound"] = o.within_bound;
        }
        oj["true_nn_index"] = o.true_nn_index;
        oj["true_nn_distance"] = o.true_nn_distance;
        oj["no_returnable"] = o.no_returnable;
        oj["nodes_visited"] = o.nodes_visited;
        if (include_timings) oj["seconds"] = o.seconds;
        outcomes.push_back(std::move(oj));
    }
    j["queries"] = std::move(outcomes);
    return j;
}

inline nlohmann::ordered_json distortion_json(const DistortionReport& r) {
    nlohmann::ordered_json j;
    j["max_pair_expansion"] = r.max_pair_expansion;
    j["sum_ratio_q"] = r.sum_ratio_q;
    j["d_empirical"] = r.d_empirical;
    return j;
}

} // namespace adnn
