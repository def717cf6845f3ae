#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "adnn/index.hpp"

#include "helpers.hpp"

using namespace adnn;
using namespace adnn::testing;

namespace {

// Uniform box instance scaled so the root set is dispersed at scale cr.
struct SmallInstance {
    PointSet points;
    double r;
    BuildParams params;
};

SmallInstance make_instance(size_t n, size_t d, double p, uint64_t seed, double eps = 0.5) {
    auto points = uniform_lp_cloud(n, d, p, seed);
    double mean = mean_pairwise_distance(points);
    double d_cal = 8.0 * p;
    double c = 64.0 * d_cal / eps;
    double r = mean / (8.0 * c);
    BuildParams params;
    params.r = r;
    params.eps_exponent = eps;
    params.master_seed = seed;
    return {std::move(points), r, params};
}

std::vector<double> perturb(const PointSet& points, size_t idx, double radius, Rng& rng) {
    std::vector<double> q(points.dim());
    std::vector<double> dir(points.dim());
    for (auto& v : dir) v = rng.normal();
    double norm = lp_norm(dir, points.metric().p);
    for (size_t i = 0; i < points.dim(); ++i) {
        q[i] = points.point(idx)[i] + radius * dir[i] / norm;
    }
    return q;
}

} // namespace

TEST_CASE("small sets build single-leaf trees") {
    auto points = random_lp_cloud(60, 4, 2.0, 3);
    BuildParams params;
    params.r = 0.1;
    params.master_seed = 1;
    auto index = build_index(points, params);
    REQUIRE(index.stats().leaf_nodes == index.params().k_trees);
    REQUIRE(index.stats().ball_nodes == 0);
    REQUIRE(index.stats().hash_nodes == 0);

    // a dataset point queries back to itself
    auto hit = index.query(points.point(7));
    REQUIRE(hit.index.has_value());
    REQUIRE(index.dataset().dist_to(*hit.index, points.point(7)) <= index.accept_radius());
}

TEST_CASE("tight cluster builds a ball root with an empty leaf child") {
    auto points = random_lp_cloud(150, 3, 2.0, 5, /*spread=*/0.001);
    BuildParams params;
    params.r = 1.0; // 2cr far exceeds the cluster diameter
    params.master_seed = 2;
    auto index = build_index(points, params);

    for (const auto& root : index.roots()) {
        REQUIRE(root->type == TreeNode::Type::Ball);
        REQUIRE(root->center == 0);
        REQUIRE(root->child->type == TreeNode::Type::Leaf);
        REQUIRE(root->child->points.empty());
    }
    auto audit = audit_index(index);
    REQUIRE(audit.ok);

    auto hit = index.query(points.point(33));
    REQUIRE(hit.index.has_value());
    REQUIRE(*hit.index == 0);
}

TEST_CASE("dispersed instance: build, audit, and promised queries") {
    auto instance = make_instance(400, 8, 2.0, 17);
    auto index = build_index(instance.points, instance.params);
    REQUIRE(index.stats().hash_nodes > 0);

    auto audit = audit_index(index);
    CAPTURE(audit.violations);
    REQUIRE(audit.ok);
    REQUIRE(index.stats().max_depth <= index.params().level_cap);

    Rng rng(4711);
    size_t hits = 0;
    for (int trial = 0; trial < 50; ++trial) {
        size_t target = rng.below(instance.points.size());
        auto q = perturb(instance.points, target, instance.r, rng);
        auto result = index.query(q);
        if (result.index.has_value()) {
            ++hits;
            REQUIRE(instance.points.dist_to(*result.index, q) <= index.accept_radius());
            REQUIRE(result.distance <= index.accept_radius());
        }
        REQUIRE(result.nodes_visited <= index.params().k_trees * (index.params().level_cap + 1));
    }
    // the promise holds for every query; most must succeed
    REQUIRE(hits >= 40);
}

TEST_CASE("queries far from everything return absent") {
    auto instance = make_instance(300, 6, 2.0, 23);
    auto index = build_index(instance.points, instance.params);
    std::vector<double> far(instance.points.dim(), 1e5);
    auto result = index.query(far);
    REQUIRE_FALSE(result.index.has_value());
}

TEST_CASE("build determinism: byte-identical across runs and thread counts") {
    auto instance = make_instance(350, 6, 4.0, 29);
    auto a = build_index(instance.points, instance.params, 1);
    auto b = build_index(instance.points, instance.params, 2);
    std::stringstream sa, sb;
    a.save(sa);
    b.save(sb);
    REQUIRE(sa.str() == sb.str());

    auto c = build_index(instance.points, instance.params, 2);
    std::stringstream sc;
    c.save(sc);
    REQUIRE(sa.str() == sc.str());

    BuildParams other = instance.params;
    other.master_seed += 1;
    auto d = build_index(instance.points, other);
    std::stringstream sd;
    d.save(sd);
    REQUIRE(sa.str() != sd.str());
}

TEST_CASE("save/load: identical query answers") {
    auto instance = make_instance(300, 8, 4.0, 31);
    auto index = build_index(instance.points, instance.params);
    std::stringstream buf;
    index.save(buf);
    auto loaded = Index::load(buf);

    REQUIRE(loaded.params().k_trees == index.params().k_trees);
    REQUIRE(loaded.dataset().digest() == index.dataset().digest());

    Rng rng(37);
    for (int trial = 0; trial < 100; ++trial) {
        size_t target = rng.below(instance.points.size());
        auto q = perturb(instance.points, target, instance.r * rng.uniform(0.0, 3.0), rng);
        auto r1 = index.query(q);
        auto r2 = loaded.query(q);
        REQUIRE(r1.index == r2.index);
        REQUIRE(r1.nodes_visited == r2.nodes_visited);
        if (r1.index) REQUIRE(r1.distance == r2.distance);
    }

    auto audit = audit_index(loaded);
    REQUIRE(audit.ok);
}

TEST_CASE("corrupted stream is rejected, no partial index") {
    auto instance = make_instance(200, 5, 2.0, 41);
    auto index = build_index(instance.points, instance.params);
    std::stringstream buf;
    index.save(buf);
    std::string bytes = buf.str();

    SECTION("flipped byte fails the checksum") {
        bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
        std::stringstream corrupted(bytes);
        REQUIRE_THROWS_AS(Index::load(corrupted), FormatError);
    }
    SECTION("truncation fails") {
        std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
        REQUIRE_THROWS_AS(Index::load(truncated), FormatError);
    }
    SECTION("bad magic fails") {
        bytes[0] = 'X';
        std::stringstream wrong(bytes);
        REQUIRE_THROWS_AS(Index::load(wrong), FormatError);
    }
}

TEST_CASE("ball nodes strictly halve and audits catch tampering") {
    auto points = random_lp_cloud(250, 4, 2.0, 47, 0.01);
    // plant one far outlier so the root peels a dense ball first
    std::vector<double> coords = points.coords();
    for (size_t k = 0; k < points.dim(); ++k) coords[k] += 100.0;
    PointSet mixed(points.size(), points.dim(), std::move(coords), points.metric());

    BuildParams params;
    params.r = 0.05;
    params.master_seed = 5;
    auto index = build_index(mixed, params);
    REQUIRE(index.stats().ball_nodes >= index.params().k_trees);
    auto audit = audit_index(index);
    CAPTURE(audit.violations);
    REQUIRE(audit.ok);
}

TEST_CASE("snowflaked Schatten instance builds and audits") {
    const double p = 1.5;
    auto points = random_schatten_cloud(160, 3, p, 53, p / 2.0, 1.0);
    double mean = mean_pairwise_distance(points);
    BuildParams params;
    params.eps_exponent = 0.5;
    params.d_cal = 8.0;
    params.c = 64.0 * params.d_cal / params.eps_exponent;
    params.r = mean / (8.0 * params.c);
    params.master_seed = 7;
    auto index = build_index(points, params);
    auto audit = audit_index(index);
    CAPTURE(audit.violations);
    REQUIRE(audit.ok);

    auto hit = index.query(points.point(12));
    REQUIRE(hit.index.has_value());
}

TEST_CASE("build parameter validation") {
    auto points = random_lp_cloud(50, 3, 2.0, 59);
    BuildParams params;
    params.r = -1.0;
    REQUIRE_THROWS_AS(build_index(points, params), std::invalid_argument);

    params.r = 1e-9; // aspect ratio cap
    REQUIRE_THROWS_AS(build_index(points, params), std::invalid_argument);

    params.r = 0.5;
    params.eps_exponent = 2.0;
    REQUIRE_THROWS_AS(build_index(points, params), std::invalid_argument);

    params.eps_exponent = 0.5;
    params.c = 3.0; // c must exceed 6
    REQUIRE_THROWS_AS(build_index(points, params), std::invalid_argument);
}
