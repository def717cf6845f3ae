// Command-line surface for the near-neighbor engine: instance
// generation, index lifecycle, benchmarking against the brute-force
// oracle, structural verification and embedding statistics.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "adnn/harness.hpp"
#include "adnn/index.hpp"
#include "adnn/report_json.hpp"
#include "adnn/weak_embedding.hpp"

using nlohmann::ordered_json;

namespace {

std::string sniff_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    return std::string(magic, magic + in.gcount());
}

// Accepts either a dataset file or a planted-instance file.
adnn::PointSet load_points_arg(const std::string& path) {
    auto magic = sniff_magic(path);
    if (magic == "ADNP") return adnn::load_instance_file(path).dataset;
    return adnn::load_dataset_file(path);
}

adnn::PointSet load_query_points(const std::string& path, adnn::MetricDescriptor metric) {
    auto magic = sniff_magic(path);
    if (magic == "ADNN") return adnn::load_dataset_file(path);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return adnn::load_csv_points(in, metric);
}

void emit(const ordered_json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
        out << j.dump(2) << "\n";
    }
}

int cmd_gen(size_t n, size_t d, const std::string& metric_name, double p, double r, double c,
            uint64_t seed, size_t queries, const std::string& out) {
    adnn::MetricDescriptor metric;
    metric.kind = metric_name == "schatten" ? adnn::MetricKind::SchattenP : adnn::MetricKind::Lp;
    metric.p = p;
    auto inst = adnn::gen_planted(n, d, metric, r, c, seed, queries);

    // post-generation verification scan
    size_t bad = 0;
    for (const auto& q : inst.queries) {
        if (inst.dataset.dist_to(q.planted_index, q.point) > r * (1.0 + 1e-9)) ++bad;
    }
    if (bad > 0) throw std::runtime_error("gen: planted distance verification failed");

    adnn::save_instance_file(inst, out);
    std::cerr << "instance: n=" << n << " dim=" << inst.dataset.dim() << " queries="
              << inst.queries.size() << " collisions=" << inst.collision_log.size()
              << " digest=" << inst.dataset.digest() << "\n";
    return 0;
}

int cmd_build(const std::string& data_path, double r, double eps, double c, size_t trees,
              uint64_t seed, size_t threads, const std::string& out) {
    auto points = load_points_arg(data_path);
    auto eff = adnn::snowflake_adapt(points, r,
                                     c > 0.0 ? std::optional<double>(c) : std::nullopt);
    adnn::BuildParams params;
    params.r = eff.r;
    params.eps_exponent = eps;
    if (eff.c) params.c = *eff.c;
    params.k_trees = trees;
    params.master_seed = seed;
    auto index = adnn::build_index(eff.data, params, threads);
    adnn::save_index_file(index, out);
    std::cerr << "index: trees=" << index.params().k_trees << " nodes="
              << index.stats().total_nodes() << " depth=" << index.stats().max_depth
              << " build_seconds=" << index.stats().build_seconds << "\n";
    return 0;
}

int cmd_query(const std::string& index_path, const std::string& point_file,
              const std::string& out) {
    auto index = adnn::load_index_file(index_path);
    auto queries = load_query_points(point_file, index.dataset().metric());
    if (queries.dim() != index.dataset().dim()) {
        throw std::runtime_error("query: point dimension does not match the index");
    }
    ordered_json results = ordered_json::array();
    for (size_t i = 0; i < queries.size(); ++i) {
        auto r = index.query(queries.point(i));
        ordered_json row;
        row["query"] = i;
        row["found"] = r.index.has_value();
        if (r.index) {
            row["index"] = *r.index;
            row["distance"] = r.distance;
        }
        row["nodes_visited"] = r.nodes_visited;
        results.push_back(std::move(row));
    }
    ordered_json j;
    j["schema_version"] = 1;
    j["accept_radius"] = index.accept_radius();
    j["results"] = std::move(results);
    emit(j, out);
    return 0;
}

int cmd_bench(const std::string& instance_path, double eps, double c, bool as_json,
              uint64_t seed, bool seed_set, size_t trees, size_t threads) {
    auto inst = adnn::load_instance_file(instance_path);
    auto report = adnn::run_bench(
        inst, eps, c > 0.0 ? std::optional<double>(c) : std::nullopt,
        seed_set ? std::optional<uint64_t>(seed) : std::nullopt,
        trees > 0 ? std::optional<size_t>(trees) : std::nullopt, threads);
    if (as_json) {
        std::cout << adnn::bench_report_json(report).dump(2) << "\n";
    } else {
        std::cout << "success_rate        " << report.success_rate << "\n"
                  << "answered            " << report.n_answered << "/" << report.n_queries << "\n"
                  << "no_returnable       " << report.n_no_returnable << "\n"
                  << "mean_nodes_visited  " << report.mean_nodes_visited << "\n"
                  << "build_seconds       " << report.build_seconds << "\n"
                  << "query_p50_seconds   " << report.query_seconds_p50 << "\n"
                  << "query_p95_seconds   " << report.query_seconds_p95 << "\n"
                  << "space_bytes         " << report.space_bytes << "\n"
                  << "audit               " << (report.audit_ok ? "pass" : "FAIL") << "\n";
        for (const auto& v : report.audit_violations) std::cout << "  violation: " << v << "\n";
    }
    return report.audit_ok ? 0 : 3;
}

int cmd_verify(const std::string& index_path, const std::string& data_path) {
    auto index = adnn::load_index_file(index_path);
    bool ok = true;
    if (!data_path.empty()) {
        auto points = load_points_arg(data_path);
        auto eff = adnn::snowflake_adapt(points, index.params().r, std::nullopt);
        bool digest_ok = eff.data.digest() == index.dataset().digest() ||
                         points.digest() == index.dataset().digest();
        std::cout << "dataset digest      " << (digest_ok ? "pass" : "FAIL") << "\n";
        ok = ok && digest_ok;
    }
    auto audit = adnn::audit_index(index);
    std::cout << "nodes checked       " << audit.nodes_checked << "\n";
    std::cout << "partition/load/ball " << (audit.ok ? "pass" : "FAIL") << "\n";
    for (const auto& v : audit.violations) std::cout << "  violation: " << v << "\n";
    bool depth_ok = index.stats().max_depth <= index.params().level_cap;
    std::cout << "depth cap           " << (depth_ok ? "pass" : "FAIL") << "\n";
    ok = ok && audit.ok && depth_ok;
    return ok ? 0 : 3;
}

int cmd_embed_stats(const std::string& data_path, double q, bool as_json) {
    auto points = load_points_arg(data_path);
    ordered_json j;
    j["schema_version"] = 1;
    j["n"] = points.size();
    j["dim"] = points.dim();
    j["metric"] = points.metric().kind == adnn::MetricKind::Lp ? "lp" : "schatten";
    j["p"] = points.metric().p;

    if (points.metric().kind == adnn::MetricKind::Lp) {
        auto spec = adnn::build_lp_embedding(points, q);
        std::vector<double> images;
        for (size_t i = 0; i < points.size(); ++i) {
            auto img = adnn::evaluate_embedding(spec, points.point(i));
            images.insert(images.end(), img.begin(), img.end());
        }
        auto report = adnn::measure_q_avg_distortion(points, images, points.dim(), q, q);
        j["lp_embedding"] = adnn::distortion_json(report);
        j["lp_embedding"]["q"] = q;
        j["lp_embedding"]["lip_bound"] = spec.lip_bound;
    } else {
        auto snowflaked = points.with_snowflake(points.metric().p / 2.0);
        auto spec = adnn::build_schatten_embedding(points, points.metric().p);
        std::vector<double> images;
        for (size_t i = 0; i < points.size(); ++i) {
            auto img = adnn::evaluate_schatten_embedding(spec, points.point(i));
            images.insert(images.end(), img.begin(), img.end());
        }
        auto report = adnn::measure_q_avg_distortion(snowflaked, images, points.dim(), 1.0, 2.0);
        j["schatten_embedding"] = adnn::distortion_json(report);
        j["schatten_embedding"]["residual"] = spec.residual;
        j["schatten_embedding"]["target_eps"] = spec.target_eps;
    }

    auto eff = adnn::snowflake_adapt(points, 1.0, std::nullopt);
    auto weak_spec = adnn::build_weak_embedding(eff.data, /*schatten_seed=*/points.digest());
    j["weak_embedding"]["variant"] =
        weak_spec.variant == adnn::WeakVariant::RadialDistance
            ? "radial"
            : (weak_spec.variant == adnn::WeakVariant::ShiftedLp ? "shifted_lp"
                                                                 : "shifted_schatten");
    j["weak_embedding"]["lip_bound"] = weak_spec.lip_bound;
    j["weak_embedding"]["weak_distortion_witness"] = adnn::measure_weak_distortion(eff.data, weak_spec);

    if (as_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        if (j.contains("lp_embedding")) {
            std::cout << "lp d_empirical        " << j["lp_embedding"]["d_empirical"] << "\n";
        } else {
            std::cout << "schatten d_empirical  " << j["schatten_embedding"]["d_empirical"]
                      << "\n";
        }
        std::cout << "weak variant          " << j["weak_embedding"]["variant"] << "\n"
                  << "weak witness          " << j["weak_embedding"]["weak_distortion_witness"]
                  << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"average-distortion near-neighbor search engine"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a planted (c,r)-NNS instance");
    size_t gen_n = 2000, gen_d = 20, gen_queries = 100;
    std::string gen_metric = "lp", gen_out;
    double gen_p = 4.0, gen_r = 1.0, gen_c = 4096.0;
    uint64_t gen_seed = 17;
    gen->add_option("--n", gen_n, "dataset size");
    gen->add_option("--d", gen_d, "dimension (matrix side for schatten)");
    gen->add_option("--metric", gen_metric, "lp|schatten")
        ->check(CLI::IsMember({"lp", "schatten"}));
    gen->add_option("--p", gen_p, "norm exponent");
    gen->add_option("--r", gen_r, "planted scale");
    gen->add_option("--c", gen_c, "approximation for the collision scan");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--queries", gen_queries, "number of planted queries");
    gen->add_option("--out", gen_out, "output instance file")->required();

    // build
    auto* build = app.add_subcommand("build", "build an index from a dataset or instance");
    std::string build_data, build_out;
    double build_r = 1.0, build_eps = 0.5, build_c = 0.0;
    size_t build_trees = 0, build_threads = 0;
    uint64_t build_seed = 0;
    build->add_option("--data", build_data, "dataset (ADNN) or instance (ADNP) file")->required();
    build->add_option("--r", build_r, "scale")->required();
    build->add_option("--eps", build_eps, "target query exponent");
    build->add_option("--c", build_c, "approximation override (0 = derive)");
    build->add_option("--trees", build_trees, "tree count override (0 = derive)");
    build->add_option("--seed", build_seed, "master seed");
    build->add_option("--threads", build_threads, "build threads (0 = all cores)");
    build->add_option("--out", build_out, "output index file")->required();

    // query
    auto* query = app.add_subcommand("query", "answer queries from a point file");
    std::string query_index, query_points, query_out;
    query->add_option("--index", query_index, "index file")->required();
    query->add_option("--point-file", query_points, "CSV (one point per row) or ADNN file")
        ->required();
    query->add_option("--out", query_out, "output JSON path (default stdout)");

    // bench
    auto* bench = app.add_subcommand("bench", "build + query + audit a planted instance");
    std::string bench_instance;
    double bench_eps = 0.5, bench_c = 0.0;
    bool bench_json = false;
    uint64_t bench_seed = 0;
    size_t bench_trees = 0, bench_threads = 0;
    bench->add_option("--instance", bench_instance, "instance file")->required();
    bench->add_option("--eps", bench_eps, "target query exponent")->required();
    bench->add_option("--c", bench_c, "approximation override (0 = derive)");
    bench->add_flag("--json", bench_json, "emit the full JSON report");
    auto* bench_seed_opt = bench->add_option("--seed", bench_seed, "master seed override");
    bench->add_option("--trees", bench_trees, "tree count override");
    bench->add_option("--threads", bench_threads, "build threads (0 = all cores)");

    // verify
    auto* verify = app.add_subcommand("verify", "structural audit of an index file");
    std::string verify_index, verify_data;
    verify->add_option("--index", verify_index, "index file")->required();
    verify->add_option("--data", verify_data, "dataset or instance file for the digest check");

    // embed-stats
    auto* estats = app.add_subcommand("embed-stats", "embedding distortion reports");
    std::string estats_data;
    double estats_q = 1.0;
    bool estats_json = false;
    estats->add_option("--data", estats_data, "dataset or instance file")->required();
    estats->add_option("--q", estats_q, "target norm exponent for the Lp embedding");
    estats->add_flag("--json", estats_json, "emit JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_gen(gen_n, gen_d, gen_metric, gen_p, gen_r, gen_c, gen_seed, gen_queries,
                           gen_out);
        }
        if (build->parsed()) {
            return cmd_build(build_data, build_r, build_eps, build_c, build_trees, build_seed,
                             build_threads, build_out);
        }
        if (query->parsed()) return cmd_query(query_index, query_points, query_out);
        if (bench->parsed()) {
            return cmd_bench(bench_instance, bench_eps, bench_c, bench_json, bench_seed,
                             bench_seed_opt->count() > 0, bench_trees, bench_threads);
        }
        if (verify->parsed()) return cmd_verify(verify_index, verify_data);
        if (estats->parsed()) return cmd_embed_stats(estats_data, estats_q, estats_json);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
