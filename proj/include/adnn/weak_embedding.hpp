#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "adnn/dataset.hpp"
#include "adnn/detail/binary.hpp"
#include "adnn/detail/rng.hpp"
#include "adnn/mazur.hpp"
#include "adnn/schatten.hpp"
#include "adnn/stats.hpp"

namespace adnn {

/// Branch-split constant alpha. 1/20 keeps
/// both 2a/(1-4a) <= 1/8 and (1-4a)/16 >= 1/32.
inline constexpr double kWeakAlpha = 0.05;

/// Calibrated constant for the non-commutative Mazur continuity bound
/// on the unit sphere (1 <= p <= 2); validated by the test suite.
inline constexpr double kNcMazurCalibrated = 8.0;

/// Seeded random-sign linear map from ℓ2^src into ℓ1^{4·src}, scaled so
/// the expected image ℓ1 norm equals the source ℓ2 norm. Carries a
/// certified ℓ2→ℓ1 operator bound computed from the realized signs.
class SignSplitMap {
public:
    SignSplitMap() = default;

    SignSplitMap(size_t src_dim, uint64_t seed)
        : src_dim_(src_dim), dst_dim_(4 * src_dim), seed_(seed) {
        scale_ = std::sqrt(1.5707963267948966) / static_cast<double>(dst_dim_);
        Rng rng(mix_seed(seed, 0x51674Eu));
        signs_.resize(dst_dim_ * src_dim_);
        for (auto& s : signs_) s = (rng.next_u64() & 1) ? 1 : -1;

        // ‖Az‖₁ ≤ √dst·‖Az‖₂ ≤ √dst·σ_max(A)·‖z‖₂
        Eigen::MatrixXd a(static_cast<Eigen::Index>(dst_dim_), static_cast<Eigen::Index>(src_dim_));
        for (size_t i = 0; i < dst_dim_; ++i) {
            for (size_t j = 0; j < src_dim_; ++j) {
                a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    scale_ * signs_[i * src_dim_ + j];
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram(a.transpose() * a,
                                                            Eigen::EigenvaluesOnly);
        double sigma_max = std::sqrt(gram.eigenvalues().maxCoeff());
        lip_ = std::sqrt(static_cast<double>(dst_dim_)) * sigma_max * (1.0 + 1e-9);
    }

    size_t source_dim() const { return src_dim_; }
    size_t target_dim() const { return dst_dim_; }
    uint64_t seed() const { return seed_; }
    double lip() const { return lip_; }

    std::vector<double> apply(std::span<const double> z) const {
        if (z.size() != src_dim_) throw std::invalid_argument("SignSplitMap: dimension mismatch");
        std::vector<double> out(dst_dim_, 0.0);
        for (size_t i = 0; i < dst_dim_; ++i) {
            const signed char* row = signs_.data() + i * src_dim_;
            double acc = 0.0;
            for (size_t j = 0; j < src_dim_; ++j) acc += row[j] * z[j];
            out[i] = scale_ * acc;
        }
        return out;
    }

private:
    size_t src_dim_ = 0;
    size_t dst_dim_ = 0;
    uint64_t seed_ = 0;
    std::vector<signed char> signs_;
    double scale_ = 0.0;
    double lip_ = 1.0;
};

enum class WeakVariant : uint8_t {
    RadialDistance = 0,
    ShiftedLp = 1,
    ShiftedSchatten = 2
};

/// A weak-average-distortion embedding into ℓ1: either the distance to
/// the central point, or the average-distortion embedding built on the
/// dense subset Q around it. evaluate_weak divides by lip_bound, so
/// the delivered map is 1-Lipschitz.
struct WeakEmbeddingSpec {
    WeakVariant variant = WeakVariant::RadialDistance;
    MetricDescriptor metric;       // source metric (snowflake included)
    std::vector<double> center;    // RadialDistance
    ShiftedMazurSpec mazur;        // ShiftedLp
    SchattenMazurSpec schatten;    // ShiftedSchatten
    SignSplitMap sign_split;       // ShiftedSchatten: ℓ2 → ℓ1 stage
    double lip_bound = 1.0;
    double alpha_const = kWeakAlpha;

    // Build-time diagnostics (not serialized).
    size_t center_index = 0;
    double center_radius = 0.0; // s(x*)
    std::optional<std::vector<size_t>> q_subset_indices;

    size_t target_dim() const {
        switch (variant) {
            case WeakVariant::RadialDistance: return 1;
            case WeakVariant::ShiftedLp: return mazur.shift.size();
            case WeakVariant::ShiftedSchatten: return sign_split.target_dim();
        }
        return 0;
    }

    void serialize(BinaryWriter& w) const {
        w.u8(2);
        w.u8(static_cast<uint8_t>(variant));
        switch (variant) {
            case WeakVariant::RadialDistance:
                write_f64_vector(w, center);
                break;
            case WeakVariant::ShiftedLp:
                mazur.serialize(w);
                break;
            case WeakVariant::ShiftedSchatten:
                schatten.serialize(w);
                break;
        }
        w.f64(lip_bound);
        if (variant == WeakVariant::ShiftedSchatten) w.u64(sign_split.seed());
    }

    static WeakEmbeddingSpec deserialize(BinaryReader& r, const MetricDescriptor& metric) {
        if (r.u8() != 2) throw FormatError("expected WeakEmbedding spec tag");
        WeakEmbeddingSpec spec;
        spec.metric = metric;
        uint8_t variant = r.u8();
        if (variant > 2) throw FormatError("unknown weak embedding variant");
        spec.variant = static_cast<WeakVariant>(variant);
        switch (spec.variant) {
            case WeakVariant::RadialDistance:
                spec.center = read_f64_vector(r);
                break;
            case WeakVariant::ShiftedLp:
                spec.mazur = ShiftedMazurSpec::deserialize(r);
                break;
            case WeakVariant::ShiftedSchatten:
                spec.schatten = SchattenMazurSpec::deserialize(r);
                break;
        }
        spec.lip_bound = r.f64();
        if (spec.variant == WeakVariant::ShiftedSchatten) {
            uint64_t seed = r.u64();
            spec.sign_split = SignSplitMap(spec.schatten.side * spec.schatten.side, seed);
        }
        return spec;
    }
};

/// sup_{t ≥ s} (t−s)·|P \ B(center,t)|/n, evaluated exactly over the
/// realized center distances.
inline double easy_case_score(const PointSet& points, size_t center_idx, double s) {
    const size_t n = points.size();
    std::vector<double> dists(n);
    for (size_t i = 0; i < n; ++i) dists[i] = points.dist(center_idx, i);
    std::sort(dists.begin(), dists.end());
    double best = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double delta = dists[i];
        if (delta <= s) continue;
        if (i > 0 && dists[i - 1] == delta) continue;
        double tail = static_cast<double>(n - i) / static_cast<double>(n);
        best = std::max(best, (delta - s) * tail);
    }
    return best;
}

namespace detail {

inline double mazur_snowflake_lip(double p) {
    // radial extension bound for M_{p,2} on the (p/2)-snowflake
    return 1.0 + std::pow(2.0, p / 2.0) * kNcMazurCalibrated;
}

} // namespace detail

/// Builds the weak embedding for P: the radial map when the far tail
/// around the central point is heavy enough, otherwise the shifted
/// average-distortion embedding on Q = P ∩ B(x*, 2s(x*)). The returned
/// map is defined on the whole space. `schatten_seed` feeds the ℓ2→ℓ1
/// stage and is recorded in the spec.
inline WeakEmbeddingSpec build_weak_embedding(const PointSet& points, uint64_t schatten_seed = 0) {
    const size_t n = points.size();
    if (n < 2) throw std::invalid_argument("build_weak_embedding: need n >= 2");
    const auto& metric = points.metric();
    if (metric.kind == MetricKind::Lp) {
        if (metric.snowflake_alpha != 1.0) {
            throw std::invalid_argument("build_weak_embedding: snowflaked Lp is not supported");
        }
    } else {
        if (!(metric.p >= 1.0 && metric.p <= 2.0)) {
            throw std::invalid_argument("build_weak_embedding: Schatten p in [1,2] required");
        }
        if (std::abs(metric.snowflake_alpha - metric.p / 2.0) > 1e-12) {
            throw std::invalid_argument(
                "build_weak_embedding: Schatten sets must carry the p/2 snowflake");
        }
    }

    auto weak = weak_l1_norm(points);
    if (weak.value == 0.0) {
        throw std::invalid_argument("build_weak_embedding: all points identical");
    }
    auto center = central_point(points);

    WeakEmbeddingSpec spec;
    spec.metric = metric;
    spec.center_index = center.index;
    spec.center_radius = center.radius;

    double score = easy_case_score(points, center.index, center.radius);
    if (n <= 2 || score >= kWeakAlpha * weak.value) {
        spec.variant = WeakVariant::RadialDistance;
        auto c = points.point(center.index);
        spec.center.assign(c.begin(), c.end());
        spec.lip_bound = 1.0;
        return spec;
    }

    std::vector<size_t> q_indices;
    for (size_t i = 0; i < n; ++i) {
        if (points.dist(center.index, i) <= 2.0 * center.radius) q_indices.push_back(i);
    }
    PointSet q_set = points.subset(q_indices);
    spec.q_subset_indices = std::move(q_indices);

    if (metric.kind == MetricKind::Lp) {
        spec.variant = WeakVariant::ShiftedLp;
        spec.mazur = build_lp_embedding(q_set, 1.0);
        spec.lip_bound = spec.mazur.lip_bound;
    } else {
        spec.variant = WeakVariant::ShiftedSchatten;
        spec.schatten = build_schatten_embedding(q_set, metric.p);
        spec.sign_split = SignSplitMap(points.dim(), schatten_seed);
        spec.lip_bound = detail::mazur_snowflake_lip(metric.p) * spec.sign_split.lip();
    }
    return spec;
}

/// Evaluates the delivered (1/lip_bound-rescaled) map; the result is
/// 1-Lipschitz from the source metric into ℓ1.
inline std::vector<double> evaluate_weak(const WeakEmbeddingSpec& spec,
                                         std::span<const double> x) {
    std::vector<double> out;
    switch (spec.variant) {
        case WeakVariant::RadialDistance:
            out.assign(1, distance(spec.center, x, spec.metric));
            break;
        case WeakVariant::ShiftedLp:
            out = evaluate_embedding(spec.mazur, x);
            break;
        case WeakVariant::ShiftedSchatten:
            out = spec.sign_split.apply(evaluate_schatten_embedding(spec.schatten, x));
            break;
    }
    if (spec.lip_bound != 1.0) {
        for (auto& v : out) v /= spec.lip_bound;
    }
    return out;
}

inline std::vector<double> weak_images(const WeakEmbeddingSpec& spec, const PointSet& points) {
    std::vector<double> images;
    images.reserve(points.size() * spec.target_dim());
    for (size_t i = 0; i < points.size(); ++i) {
        auto img = evaluate_weak(spec, points.point(i));
        images.insert(images.end(), img.begin(), img.end());
    }
    return images;
}

/// Empirical weak-average-distortion witness:
/// (max pair expansion) · weak(P) / weak(f(P)).
inline double measure_weak_distortion(const PointSet& points, const WeakEmbeddingSpec& spec) {
    const size_t n = points.size();
    if (n < 2) throw std::invalid_argument("measure_weak_distortion: need n >= 2");
    const size_t dim = spec.target_dim();
    auto images = weak_images(spec, points);

    double max_expansion = 0.0;
    bool any_distinct = false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double din = points.dist(i, j);
            if (din <= 0.0) continue;
            any_distinct = true;
            double dout = detail::l1_dist_row(images, dim, i, j);
            max_expansion = std::max(max_expansion, dout / din);
        }
    }
    if (!any_distinct) throw std::invalid_argument("measure_weak_distortion: all points identical");

    auto weak_src = weak_l1_norm(points);
    auto weak_img = weak_l1_norm_l1(images, n, dim);
    if (weak_img.value == 0.0) {
        throw std::runtime_error("measure_weak_distortion: degenerate image set");
    }
    return max_expansion * weak_src.value / weak_img.value;
}

} // namespace adnn
