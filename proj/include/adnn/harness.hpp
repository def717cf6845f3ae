#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adnn/dataset.hpp"
#include "adnn/detail/binary.hpp"
#include "adnn/detail/rng.hpp"
#include "adnn/index.hpp"
#include "adnn/stats.hpp"

namespace adnn {

inline constexpr uint16_t kInstanceFormatVersion = 1;

struct PlantedQuery {
    std::vector<double> point;
    uint32_t planted_index = 0;
};

/// A query whose true neighborhood is contaminated: some non-planted
/// point also sits within c·r.
struct CollisionEntry {
    uint32_t query_index = 0;
    uint32_t other_index = 0;
    double distance = 0.0;
};

/// A (c,r)-NNS test instance: a dataset plus queries planted at
/// distance exactly r from chosen dataset points.
struct PlantedInstance {
    PointSet dataset;
    std::vector<PlantedQuery> queries;
    double r = 1.0;
    double c = 0.0;
    uint64_t seed = 0;
    std::vector<CollisionEntry> collision_log;

    void save(std::ostream& out) const {
        BinaryWriter w(out);
        w.magic("ADNP");
        w.u16(kInstanceFormatVersion);
        w.f64(r);
        w.f64(c);
        w.u64(seed);
        dataset.write_body(w);
        w.u64(queries.size());
        for (const auto& q : queries) {
            w.u32(q.planted_index);
            for (double v : q.point) w.f64(v);
        }
        w.u64(collision_log.size());
        for (const auto& e : collision_log) {
            w.u32(e.query_index);
            w.u32(e.other_index);
            w.f64(e.distance);
        }
        w.finish_with_checksum();
    }

    static PlantedInstance load(std::istream& in) {
        BinaryReader rd(in);
        rd.expect_magic("ADNP", "instance");
        if (rd.u16() != kInstanceFormatVersion) throw FormatError("unsupported instance version");
        PlantedInstance inst;
        inst.r = rd.f64();
        inst.c = rd.f64();
        inst.seed = rd.u64();
        inst.dataset = PointSet::read_body(rd);
        uint64_t n_queries = rd.u64();
        inst.queries.resize(n_queries);
        for (auto& q : inst.queries) {
            q.planted_index = rd.u32();
            if (q.planted_index >= inst.dataset.size()) throw FormatError("instance: bad planted index");
            q.point.resize(inst.dataset.dim());
            for (auto& v : q.point) v = rd.f64();
        }
        uint64_t n_collisions = rd.u64();
        inst.collision_log.resize(n_collisions);
        for (auto& e : inst.collision_log) {
            e.query_index = rd.u32();
            e.other_index = rd.u32();
            e.distance = rd.f64();
        }
        rd.verify_checksum();
        return inst;
    }
};

namespace detail {

inline std::vector<double> random_direction_lp(Rng& rng, size_t d, double p) {
    std::vector<double> dir(d);
    double norm = 0.0;
    while (norm == 0.0) {
        for (auto& v : dir) v = rng.normal();
        norm = lp_norm(dir, p);
    }
    for (auto& v : dir) v /= norm;
    return dir;
}

inline std::vector<double> random_direction_schatten(Rng& rng, size_t side, double p) {
    std::vector<double> m(side * side);
    for (size_t i = 0; i < side; ++i) {
        for (size_t j = i; j < side; ++j) {
            double v = rng.normal();
            m[i * side + j] = v;
            m[j * side + i] = v;
        }
    }
    std::vector<double> zero(side * side, 0.0);
    double norm = distance(m, zero, {MetricKind::SchattenP, p, 1.0});
    for (auto& v : m) v /= norm;
    return m;
}

} // namespace detail

/// Generates a planted instance: a seeded cloud rescaled so the mean
/// pairwise distance is 8·c·r, plus queries at distance exactly r from
/// random dataset points. Unintended neighbors within c·r land in the
/// collision log.
inline PlantedInstance gen_planted(size_t n, size_t d, MetricDescriptor metric, double r,
                                   double c, uint64_t seed, size_t n_queries = 100) {
    if (n < 2) throw std::invalid_argument("gen_planted: need n >= 2");
    if (!(r > 0.0)) throw std::invalid_argument("gen_planted: r must be positive");
    if (!(c > 1.0)) throw std::invalid_argument("gen_planted: c must exceed 1");
    metric.validate();

    Rng rng(mix_seed(seed, 0xDA7A));
    const bool schatten = metric.kind == MetricKind::SchattenP;
    const size_t dim = schatten ? d * d : d;
    std::vector<double> coords;
    coords.reserve(n * dim);
    if (schatten) {
        for (size_t i = 0; i < n; ++i) {
            auto m = detail::random_direction_schatten(rng, d, metric.p);
            double scale = 3.0 * std::exp(rng.uniform(-0.2, 0.2));
            for (double v : m) coords.push_back(v * scale);
        }
    } else {
        for (size_t i = 0; i < n * dim; ++i) coords.push_back(rng.uniform(0.0, 1.0));
    }
    PointSet raw(n, dim, std::move(coords), metric);

    double mean = mean_pairwise_distance(raw);
    if (mean == 0.0) throw std::runtime_error("gen_planted: degenerate draw");
    double scale = 8.0 * c * r / mean;
    std::vector<double> scaled = raw.coords();
    for (auto& v : scaled) v *= scale;
    PlantedInstance inst{PointSet(n, dim, std::move(scaled), metric), {}, r, c, seed, {}};

    Rng qrng(mix_seed(seed, 0x9E4));
    inst.queries.resize(n_queries);
    for (size_t qi = 0; qi < n_queries; ++qi) {
        auto& q = inst.queries[qi];
        q.planted_index = static_cast<uint32_t>(qrng.below(n));
        auto base = inst.dataset.point(q.planted_index);
        auto dir = schatten ? detail::random_direction_schatten(qrng, d, metric.p)
                            : detail::random_direction_lp(qrng, dim, metric.p);
        q.point.resize(dim);
        for (size_t k = 0; k < dim; ++k) q.point[k] = base[k] + r * dir[k];
        for (size_t other = 0; other < n; ++other) {
            if (other == q.planted_index) continue;
            double dist = inst.dataset.dist_to(other, q.point);
            if (dist <= c * r) {
                inst.collision_log.push_back(
                    {static_cast<uint32_t>(qi), static_cast<uint32_t>(other), dist});
            }
        }
    }
    return inst;
}

/// Schatten-p datasets (1 <= p <= 2, unsnowflaked) are indexed through
/// their p/2-snowflake: distances, the scale and any explicit
/// approximation factor are raised to the power p/2.
struct EffectiveProblem {
    PointSet data;
    double r = 1.0;
    std::optional<double> c; // only when an explicit c was supplied
    bool adapted = false;
};

inline EffectiveProblem snowflake_adapt(const PointSet& data, double r,
                                        std::optional<double> explicit_c) {
    const auto& m = data.metric();
    if (m.kind == MetricKind::SchattenP && m.snowflake_alpha == 1.0) {
        if (!(m.p >= 1.0 && m.p <= 2.0)) {
            throw std::invalid_argument("snowflake_adapt: Schatten p in [1,2] required");
        }
        double alpha = m.p / 2.0;
        EffectiveProblem eff{data.with_snowflake(alpha), std::pow(r, alpha), std::nullopt, true};
        if (explicit_c) eff.c = std::pow(*explicit_c, alpha);
        return eff;
    }
    return {data, r, explicit_c, false};
}

struct QueryOutcome {
    uint32_t query_index = 0;
    bool answered = false;
    uint32_t returned_index = 0;
    double returned_distance = 0.0;
    uint32_t true_nn_index = 0;
    double true_nn_distance = 0.0;
    double ratio = 0.0; // returned distance / true NN distance
    bool within_bound = false;
    bool no_returnable = false; // nothing within (2c+1)r exists at all
    size_t nodes_visited = 0;
    double seconds = 0.0;
};

struct BenchReport {
    uint64_t schema_version = 1;
    BuildParams params;
    BuildStats stats;
    double r_effective = 0.0;
    bool snowflake_adapted = false;
    size_t n_queries = 0;
    size_t n_answered = 0;
    size_t n_no_returnable = 0;
    double success_rate = 0.0; // answered within (2c+1)r over all queries
    double mean_nodes_visited = 0.0;
    size_t space_bytes = 0;
    bool audit_ok = false;
    std::vector<std::string> audit_violations;
    std::vector<QueryOutcome> outcomes;
    double build_seconds = 0.0;
    double query_seconds_total = 0.0;
    double query_seconds_p50 = 0.0;
    double query_seconds_p95 = 0.0;
};

/// Builds an index for the instance, answers every query, compares
/// against the brute-force oracle and runs the structural audit.
inline BenchReport run_bench(const PlantedInstance& inst, double eps,
                             std::optional<double> c_override = std::nullopt,
                             std::optional<uint64_t> seed_override = std::nullopt,
                             std::optional<size_t> trees_override = std::nullopt,
                             size_t threads = 0) {
    auto eff = snowflake_adapt(inst.dataset, inst.r, c_override);

    BuildParams params;
    params.r = eff.r;
    params.eps_exponent = eps;
    if (eff.c) params.c = *eff.c;
    if (trees_override) params.k_trees = *trees_override;
    params.master_seed = seed_override.value_or(inst.seed);

    auto index = build_index(eff.data, params, threads);

    BenchReport report;
    report.params = index.params();
    report.stats = index.stats();
    report.r_effective = eff.r;
    report.snowflake_adapted = eff.adapted;
    report.build_seconds = index.stats().build_seconds;
    report.n_queries = inst.queries.size();

    const double accept = index.accept_radius();
    std::vector<double> times;
    times.reserve(inst.queries.size());
    size_t visited_total = 0;
    for (size_t qi = 0; qi < inst.queries.size(); ++qi) {
        const auto& q = inst.queries[qi];
        QueryOutcome outcome;
        outcome.query_index = static_cast<uint32_t>(qi);
        auto t0 = std::chrono::steady_clock::now();
        auto result = index.query(q.point);
        outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        outcome.nodes_visited = result.nodes_visited;
        visited_total += result.nodes_visited;

        auto truth = brute_force_nn(eff.data, q.point);
        outcome.true_nn_index = static_cast<uint32_t>(truth.index);
        outcome.true_nn_distance = truth.distance;
        outcome.no_returnable = truth.distance > accept;
        if (result.index) {
            outcome.answered = true;
            outcome.returned_index = *result.index;
            outcome.returned_distance = result.distance;
            outcome.within_bound = result.distance <= accept;
            outcome.ratio = truth.distance > 0.0
                                ? result.distance / truth.distance
                                : (result.distance == 0.0 ? 1.0
                                                          : std::numeric_limits<double>::infinity());
        }
        times.push_back(outcome.seconds);
        report.outcomes.push_back(std::move(outcome));
    }

    size_t ok = 0, answered = 0, no_ret = 0;
    for (const auto& o : report.outcomes) {
        if (o.answered) ++answered;
        if (o.answered && o.within_bound) ++ok;
        if (o.no_returnable) ++no_ret;
    }
    report.n_answered = answered;
    report.n_no_returnable = no_ret;
    report.success_rate =
        report.n_queries == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(report.n_queries);
    report.mean_nodes_visited =
        report.n_queries == 0 ? 0.0
                              : static_cast<double>(visited_total) / static_cast<double>(report.n_queries);

    std::sort(times.begin(), times.end());
    if (!times.empty()) {
        for (double t : times) report.query_seconds_total += t;
        report.query_seconds_p50 = times[times.size() / 2];
        report.query_seconds_p95 = times[std::min(times.size() - 1, (times.size() * 95) / 100)];
    }

    std::ostringstream sized;
    index.save(sized);
    report.space_bytes = sized.str().size();

    auto audit = audit_index(index);
    report.audit_ok = audit.ok;
    report.audit_violations = audit.violations;
    return report;
}

inline void save_instance_file(const PlantedInstance& inst, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    inst.save(out);
}

inline PlantedInstance load_instance_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return PlantedInstance::load(in);
}

} // namespace adnn
