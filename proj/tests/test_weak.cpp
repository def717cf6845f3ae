#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "adnn/stats.hpp"
#include "adnn/weak_embedding.hpp"

#include "helpers.hpp"

using namespace adnn;
using namespace adnn::testing;

namespace {

PointSet l4_sphere_cloud(size_t n, size_t d, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> coords;
    coords.reserve(n * d);
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (auto& v : x) v = rng.normal();
        double norm = lp_norm(x, 4.0);
        for (auto& v : x) coords.push_back(v / norm);
    }
    return PointSet(n, d, std::move(coords), {MetricKind::Lp, 4.0, 1.0});
}

double delivered_max_expansion(const PointSet& points, const WeakEmbeddingSpec& spec) {
    auto images = weak_images(spec, points);
    size_t dim = spec.target_dim();
    double worst = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        for (size_t j = i + 1; j < points.size(); ++j) {
            double din = points.dist(i, j);
            if (din == 0.0) continue;
            double dout = 0.0;
            const double* a = images.data() + i * dim;
            const double* b = images.data() + j * dim;
            for (size_t k = 0; k < dim; ++k) dout += std::abs(a[k] - b[k]);
            worst = std::max(worst, dout / din);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("easy_case_score: examples") {
    REQUIRE(easy_case_score(line_points({0.0, 1.0, 2.0}), 0, 1.0) == Catch::Approx(1.0 / 3.0));
    REQUIRE(easy_case_score(line_points({0.0, 1.0, 2.0}), 0, 2.0) == 0.0);
    REQUIRE(easy_case_score(line_points({0.0, 0.0, 10.0}), 0, 0.0) == Catch::Approx(10.0 / 3.0));
}

TEST_CASE("build_weak_embedding: outlier forces the radial branch") {
    std::vector<double> values(9, 0.0);
    values.push_back(100.0);
    auto points = line_points(values);
    auto spec = build_weak_embedding(points);
    REQUIRE(spec.variant == WeakVariant::RadialDistance);
    REQUIRE(spec.lip_bound == 1.0);
    REQUIRE(spec.center == std::vector<double>{0.0});

    auto at_center = evaluate_weak(spec, spec.center);
    REQUIRE(at_center == std::vector<double>{0.0});
}

TEST_CASE("build_weak_embedding: two points route to radial") {
    auto points = line_points({3.0, 8.0});
    auto spec = build_weak_embedding(points);
    REQUIRE(spec.variant == WeakVariant::RadialDistance);
    REQUIRE(measure_weak_distortion(points, spec) == Catch::Approx(1.0));
}

TEST_CASE("build_weak_embedding: dense cloud takes the hard branch") {
    auto points = uniform_lp_cloud(200, 10, 4.0, 3);
    auto spec = build_weak_embedding(points);
    REQUIRE(spec.variant == WeakVariant::ShiftedLp);
    REQUIRE(spec.q_subset_indices.has_value());

    // hard-branch facts, exact
    double s_star = spec.center_radius;
    REQUIRE(psi(points, s_star / 2.0) >= 0.5);
    double outside =
        static_cast<double>(points.size() - spec.q_subset_indices->size()) /
        static_cast<double>(points.size());
    REQUIRE(outside <= 1.0 / 8.0);
    auto weak = weak_l1_norm(points);
    REQUIRE(weak.t_star <= 2.0 * s_star / (1.0 - 4.0 * kWeakAlpha) + 1e-12);

    // diameter of the embedded dense set against the median-vs-mean bound
    auto q_set = points.subset(*spec.q_subset_indices);
    std::vector<double> mean(points.dim(), 0.0);
    for (size_t i = 0; i < q_set.size(); ++i) {
        for (size_t k = 0; k < q_set.dim(); ++k) {
            mean[k] += q_set.point(i)[k] / static_cast<double>(q_set.size());
        }
    }
    double max_to_mean = 0.0;
    std::vector<double> diff(q_set.dim());
    for (size_t i = 0; i < q_set.size(); ++i) {
        for (size_t k = 0; k < q_set.dim(); ++k) diff[k] = q_set.point(i)[k] - mean[k];
        max_to_mean = std::max(max_to_mean, lp_norm(diff, 4.0));
    }
    auto q_images = weak_images(spec, q_set);
    double img_diam = 0.0;
    for (size_t i = 0; i < q_set.size(); ++i) {
        for (size_t j = i + 1; j < q_set.size(); ++j) {
            img_diam = std::max(img_diam,
                                detail::l1_dist_row(q_images, spec.target_dim(), i, j));
        }
    }
    double unscaled_diam = img_diam * spec.lip_bound;
    REQUIRE(unscaled_diam <=
            2.0 * (1.0 + std::pow(2.0, 1.0 / 4.0)) * max_to_mean * (1.0 + 1e-12));
}

TEST_CASE("evaluate_weak: radial map is 1-Lipschitz") {
    auto points = random_lp_cloud(12, 3, 2.0, 19);
    WeakEmbeddingSpec spec;
    spec.variant = WeakVariant::RadialDistance;
    spec.metric = points.metric();
    auto c = points.point(4);
    spec.center.assign(c.begin(), c.end());
    spec.lip_bound = 1.0;
    for (size_t i = 0; i < points.size(); ++i) {
        for (size_t j = 0; j < points.size(); ++j) {
            auto fi = evaluate_weak(spec, points.point(i));
            auto fj = evaluate_weak(spec, points.point(j));
            REQUIRE(std::abs(fi[0] - fj[0]) <= points.dist(i, j) + 1e-12);
        }
    }
}

TEST_CASE("evaluate_weak: shifted branch matches the Mazur evaluation") {
    auto points = uniform_lp_cloud(150, 10, 4.0, 5);
    auto spec = build_weak_embedding(points);
    REQUIRE(spec.variant == WeakVariant::ShiftedLp);
    for (size_t i = 0; i < points.size(); i += 7) {
        auto via_weak = evaluate_weak(spec, points.point(i));
        auto direct = evaluate_embedding(spec.mazur, points.point(i));
        for (auto& v : direct) v /= spec.lip_bound;
        REQUIRE(via_weak == direct);
    }
}

TEST_CASE("measure_weak_distortion: isometry scores 1") {
    auto points = random_lp_cloud(15, 4, 1.0, 21);
    WeakEmbeddingSpec spec;
    spec.variant = WeakVariant::ShiftedLp;
    spec.metric = points.metric();
    spec.mazur.p = 1.0;
    spec.mazur.q = 1.0;
    spec.mazur.shift = std::vector<double>(4, 0.25);
    spec.mazur.lip_bound = 1.0;
    spec.lip_bound = 1.0;
    REQUIRE(measure_weak_distortion(points, spec) == Catch::Approx(1.0));
}

TEST_CASE("delivered maps never expand (post-rescaling)") {
    // 1e-12 relative slack: the audit compares fp-rounded distances
    auto dense = uniform_lp_cloud(120, 8, 4.0, 7);
    auto spec = build_weak_embedding(dense);
    REQUIRE(delivered_max_expansion(dense, spec) <= 1.0 + 1e-12);

    auto sphere = l4_sphere_cloud(80, 20, 7);
    auto spec2 = build_weak_embedding(sphere);
    REQUIRE(delivered_max_expansion(sphere, spec2) <= 1.0 + 1e-12);

    std::vector<double> with_outlier(19, 0.0);
    with_outlier.push_back(50.0);
    auto sparse = line_points(with_outlier);
    auto radial = build_weak_embedding(sparse);
    REQUIRE(delivered_max_expansion(sparse, radial) <= 1.0 + 1e-12);
}

TEST_CASE("weak embedding over snowflaked Schatten sets") {
    const double p = 1.5;
    auto points = random_schatten_cloud(30, 4, p, 25, p / 2.0);
    auto spec = build_weak_embedding(points, /*schatten_seed=*/77);
    REQUIRE(spec.variant == WeakVariant::ShiftedSchatten);
    REQUIRE(spec.sign_split.source_dim() == 16);
    REQUIRE(spec.sign_split.target_dim() == 64);
    REQUIRE(delivered_max_expansion(points, spec) <= 1.0 + 1e-12);
    double witness = measure_weak_distortion(points, spec);
    REQUIRE(witness >= 1.0 - 1e-9);

    // p/2 snowflake is mandatory
    auto unsnowflaked = random_schatten_cloud(10, 4, p, 25, 1.0);
    REQUIRE_THROWS_AS(build_weak_embedding(unsnowflaked), std::invalid_argument);
}

TEST_CASE("degenerate inputs are rejected") {
    PointSet same(4, 2, std::vector<double>(8, 1.0), {MetricKind::Lp, 2.0, 1.0});
    REQUIRE_THROWS_AS(build_weak_embedding(same), std::invalid_argument);

    auto snow = random_lp_cloud(10, 2, 2.0, 1).with_snowflake(0.5);
    REQUIRE_THROWS_AS(build_weak_embedding(snow), std::invalid_argument);
}

TEST_CASE("SignSplitMap: expectation scaling and certified bound") {
    SignSplitMap map(16, 99);
    REQUIRE(map.target_dim() == 64);
    Rng rng(3);
    double ratio_sum = 0.0;
    int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> z(16);
        for (auto& v : z) v = rng.normal();
        auto img = map.apply(z);
        double l1 = lp_norm(img, 1.0);
        double l2 = lp_norm(z, 2.0);
        REQUIRE(l1 <= map.lip() * l2);
        ratio_sum += l1 / l2;
    }
    // expected image ℓ1 norm tracks the source ℓ2 norm
    REQUIRE(ratio_sum / trials == Catch::Approx(1.0).margin(0.1));
}

TEST_CASE("WeakEmbeddingSpec serialization round trips") {
    auto dense = l4_sphere_cloud(70, 5, 13);
    auto spec = build_weak_embedding(dense);
    std::stringstream buf;
    {
        BinaryWriter w(buf);
        spec.serialize(w);
    }
    BinaryReader r(buf);
    auto loaded = WeakEmbeddingSpec::deserialize(r, dense.metric());
    REQUIRE(loaded.variant == spec.variant);
    REQUIRE(loaded.lip_bound == spec.lip_bound);
    for (size_t i = 0; i < dense.size(); i += 11) {
        REQUIRE(evaluate_weak(loaded, dense.point(i)) == evaluate_weak(spec, dense.point(i)));
    }

    const double p = 1.0;
    auto schatten_points = random_schatten_cloud(30, 4, p, 31, p / 2.0);
    auto sp = build_weak_embedding(schatten_points, 123);
    REQUIRE(sp.variant == WeakVariant::ShiftedSchatten);
    std::stringstream buf2;
    {
        BinaryWriter w(buf2);
        sp.serialize(w);
    }
    BinaryReader r2(buf2);
    auto loaded2 = WeakEmbeddingSpec::deserialize(r2, schatten_points.metric());
    REQUIRE(loaded2.variant == sp.variant);
    for (size_t i = 0; i < schatten_points.size(); i += 5) {
        REQUIRE(evaluate_weak(loaded2, schatten_points.point(i)) ==
                evaluate_weak(sp, schatten_points.point(i)));
    }
}
