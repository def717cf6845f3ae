#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <unordered_map>

#include "adnn/lsh.hpp"

#include "helpers.hpp"

using namespace adnn;
using namespace adnn::testing;

namespace {

struct NodeFixture {
    PointSet points;
    WeakEmbeddingSpec spec;
    std::vector<double> images;
    size_t dim;
    double r;
    double big_d;
    double c;
};

// A realistic hash-node context: a dispersed cloud, its weak embedding,
// and a scale r small enough for the verification inequality.
NodeFixture make_node(size_t n, size_t d, double p, uint64_t seed) {
    NodeFixture node{uniform_lp_cloud(n, d, p, seed), {}, {}, 0, 0.0, 8.0 * p, 0.0};
    node.spec = build_weak_embedding(node.points);
    node.images = weak_images(node.spec, node.points);
    node.dim = node.spec.target_dim();
    node.c = 64.0 * node.big_d;
    double weak = weak_l1_norm_l1(node.images, n, node.dim).value;
    node.r = 2.0 * node.big_d * weak / node.c / 1.25; // 25% headroom on the verification
    return node;
}

} // namespace

TEST_CASE("atomic_collision_prob: examples") {
    std::vector<double> a{0.3, -0.7}, corner{1.0, 1.0}, anti{-1.0, -1.0};
    REQUIRE(atomic_collision_prob(a, a, 1.0) == 1.0);
    REQUIRE(atomic_collision_prob(corner, anti, 1.0) == Catch::Approx(0.0).margin(1e-15));

    std::vector<double> x{0.0, 0.0}, y{1.0, 0.0};
    REQUIRE(atomic_collision_prob(x, y, 1.0) == Catch::Approx(0.75));

    std::vector<double> outside{2.0, 0.0};
    REQUIRE_THROWS_AS(atomic_collision_prob(outside, x, 1.0), std::invalid_argument);
}

TEST_CASE("choose_tensor_k: examples") {
    REQUIRE(choose_tensor_k(0.25) == 1);
    REQUIRE(choose_tensor_k(0.5) == 2);
    REQUIRE(choose_tensor_k(0.9) == 14);
    REQUIRE_THROWS_AS(choose_tensor_k(1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(choose_tensor_k(0.0), std::invalid_argument);
}

TEST_CASE("single-cut collision matches the probability law") {
    Rng rng(41);
    const size_t dim = 6;
    const double delta = 1.0;
    const int samples = 20000;
    for (int pair = 0; pair < 8; ++pair) {
        std::vector<double> x(dim), y(dim);
        for (auto& v : x) v = rng.uniform(-delta, delta);
        for (auto& v : y) v = rng.uniform(-delta, delta);
        double expected = atomic_collision_prob(x, y, delta);
        int collisions = 0;
        for (int s = 0; s < samples; ++s) {
            size_t coord = rng.below(dim);
            double threshold = rng.uniform(-delta, delta);
            bool bx = x[coord] <= threshold;
            bool by = y[coord] <= threshold;
            if (bx == by) ++collisions;
        }
        double observed = static_cast<double>(collisions) / samples;
        double se = std::sqrt(std::max(expected * (1.0 - expected), 1e-9) / samples);
        REQUIRE(std::abs(observed - expected) <= 3.0 * se + 1e-9);
    }
}

TEST_CASE("sample_empirical_hash: two far images") {
    // two points far apart in ℓ1, embedded by the identity-like radial map
    std::vector<double> images{0.0, 10.0};
    double weak = weak_l1_norm_l1(images, 2, 1).value;
    REQUIRE(weak == Catch::Approx(5.0));
    double big_d = 8.0, c = 64.0 * big_d;
    double r = 2.0 * big_d * weak / c / 2.0;
    auto h = sample_empirical_hash(images, 2, 1, r, big_d, c, 7);
    REQUIRE(h.k >= 1);
    REQUIRE(h.load_bound >= 1.0);
    uint64_t k0 = h.key_of_image(std::vector<double>{0.0});
    uint64_t k1 = h.key_of_image(std::vector<double>{10.0});
    REQUIRE(k0 != k1); // loads {1,1}
}

TEST_CASE("sample_empirical_hash: identical images violate dispersion") {
    std::vector<double> images(12, 3.25);
    REQUIRE_THROWS_AS(sample_empirical_hash(images, 6, 2, 0.1, 8.0, 512.0, 1),
                      DispersionError);
}

TEST_CASE("sample_empirical_hash: accepted hashes satisfy the exact load bound") {
    auto node = make_node(300, 8, 4.0, 11);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto h = sample_empirical_hash(node.images, node.points.size(), node.dim, node.r,
                                       node.big_d, node.c, seed);
        REQUIRE(h.k <= 64);
        // zero-tolerance recount
        std::unordered_map<uint64_t, uint64_t> buckets;
        uint64_t worst = 0;
        for (size_t i = 0; i < node.points.size(); ++i) {
            std::span<const double> img(node.images.data() + i * node.dim, node.dim);
            worst = std::max(worst, ++buckets[h.key_of_image(img)]);
        }
        REQUIRE(static_cast<double>(worst) <= h.load_bound);
        // keys are k-bit packed
        for (const auto& [key, cnt] : buckets) {
            REQUIRE(key < (h.k == 64 ? ~uint64_t{0} : (uint64_t{1} << h.k)));
        }
        // calibration inequalities from the build
        REQUIRE(16.0 * node.r / h.t_scale <= 0.5);
        double rho = h.k * std::log(1.0 / h.p1) / std::log(1.0 / h.p2_prime);
        REQUIRE(rho <= 64.0 * node.big_d / node.c);
    }
}

TEST_CASE("sample_empirical_hash: deterministic given the seed") {
    auto node = make_node(150, 6, 2.0, 13);
    auto a = sample_empirical_hash(node.images, node.points.size(), node.dim, node.r,
                                   node.big_d, node.c, 99);
    auto b = sample_empirical_hash(node.images, node.points.size(), node.dim, node.r,
                                   node.big_d, node.c, 99);
    REQUIRE(a.k == b.k);
    REQUIRE(a.attempts == b.attempts);
    for (uint32_t i = 0; i < a.k; ++i) {
        REQUIRE(a.cuts[i].coord == b.cuts[i].coord);
        REQUIRE(a.cuts[i].threshold == b.cuts[i].threshold);
    }
}

TEST_CASE("evaluate_hash: boundary and identity behavior") {
    auto node = make_node(200, 5, 4.0, 17);
    auto h = sample_empirical_hash(node.images, node.points.size(), node.dim, node.r,
                                   node.big_d, node.c, 23);
    h.embedding = node.spec;

    // identical images collide
    std::span<const double> img0(node.images.data(), node.dim);
    REQUIRE(h.key_of_image(img0) == h.key_of_image(img0));
    REQUIRE(h.evaluate(node.points.point(0)) ==
            h.key_of_image(std::span<const double>(node.images.data(), node.dim)));

    // image at the box's max corner: no threshold reaches it, all bits 0
    std::vector<double> corner(node.dim);
    for (size_t i = 0; i < node.dim; ++i) corner[i] = h.anchor[i] + h.delta;
    bool any_at_delta = false;
    for (const auto& cut : h.cuts) any_at_delta |= (cut.threshold >= h.delta);
    if (!any_at_delta) {
        REQUIRE(h.key_of_image(corner) == 0);
    }

    // clamping: far outside the box maps like the corner
    std::vector<double> far(node.dim);
    for (size_t i = 0; i < node.dim; ++i) far[i] = h.anchor[i] + 50.0 * (h.delta + 1.0);
    REQUIRE(h.key_of_image(far) == h.key_of_image(corner));
}

TEST_CASE("collision frequency of a fixed pair matches the k-cut product law") {
    // unconditioned sampling of k cuts; close pair at image distance << delta
    const size_t dim = 4;
    const double delta = 2.0;
    std::vector<double> x{0.1, -0.4, 0.9, 0.0}, y{0.2, -0.5, 0.8, 0.1};
    double p1 = atomic_collision_prob(x, y, delta);
    const uint32_t k = 3;
    Rng rng(59);
    const int samples = 30000;
    int collisions = 0;
    for (int s = 0; s < samples; ++s) {
        bool collide = true;
        for (uint32_t b = 0; b < k; ++b) {
            size_t coord = rng.below(dim);
            double threshold = rng.uniform(-delta, delta);
            if ((x[coord] <= threshold) != (y[coord] <= threshold)) collide = false;
        }
        if (collide) ++collisions;
    }
    double expected = std::pow(p1, k);
    double observed = static_cast<double>(collisions) / samples;
    double se = std::sqrt(expected * (1.0 - expected) / samples);
    REQUIRE(std::abs(observed - expected) <= 4.0 * se);
}

TEST_CASE("EmpiricalHashFn serialization round trip") {
    auto node = make_node(120, 6, 4.0, 29);
    auto h = sample_empirical_hash(node.images, node.points.size(), node.dim, node.r,
                                   node.big_d, node.c, 31);
    h.embedding = node.spec;

    std::stringstream buf;
    {
        BinaryWriter w(buf);
        h.serialize(w);
    }
    BinaryReader r(buf);
    auto loaded = EmpiricalHashFn::deserialize(r, node.points.metric());
    REQUIRE(loaded.k == h.k);
    REQUIRE(loaded.delta == h.delta);
    REQUIRE(loaded.load_bound == h.load_bound);
    for (size_t i = 0; i < node.points.size(); i += 13) {
        REQUIRE(loaded.evaluate(node.points.point(i)) == h.evaluate(node.points.point(i)));
    }
}
