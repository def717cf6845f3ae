#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "adnn/detail/binary.hpp"
#include "adnn/detail/rng.hpp"
#include "adnn/stats.hpp"
#include "adnn/weak_embedding.hpp"

namespace adnn {

/// One grid cut: bit = 1{image[coord] <= threshold}.
struct AtomicCut {
    uint32_t coord = 0;
    double threshold = 0.0;
};

/// Thrown when the hash sampler's verification step fails: the caller's
/// dispersion precondition did not hold for the supplied images.
class DispersionError : public std::runtime_error {
public:
    explicit DispersionError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown on parameter miscalibration: tensor width overflow, repeated
/// rejection past the cap, or a violated calibration inequality.
class CalibrationError : public std::runtime_error {
public:
    explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

/// Exact collision probability of one atomic cut with a uniform
/// coordinate and a uniform threshold on [-delta, delta]:
/// 1 − ‖x−y‖₁ / (2·d·delta).
inline double atomic_collision_prob(std::span<const double> x, std::span<const double> y,
                                    double delta) {
    if (x.size() != y.size()) throw std::invalid_argument("atomic_collision_prob: dimension mismatch");
    const double slack = delta * 1e-9;
    double l1 = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) > delta + slack || std::abs(y[i]) > delta + slack) {
            throw std::invalid_argument("atomic_collision_prob: point outside the box");
        }
        l1 += std::abs(x[i] - y[i]);
    }
    return 1.0 - l1 / (2.0 * static_cast<double>(x.size()) * delta);
}

/// Smallest k >= 1 with p2^k <= 1/4.
inline uint32_t choose_tensor_k(double p2) {
    if (!(p2 > 0.0 && p2 < 1.0)) throw std::invalid_argument("choose_tensor_k: p2 must be in (0,1)");
    uint32_t k = 1;
    double power = p2;
    while (power > 0.25) {
        power *= p2;
        ++k;
        if (k > 4096) throw CalibrationError("choose_tensor_k: p2 too close to 1");
    }
    return k;
}

/// One accepted data-dependent hash: k atomic cuts over the translated,
/// clamped weak-embedding images, plus the certified bucket-load bound
/// its acceptance was conditioned on.
struct EmpiricalHashFn {
    std::vector<AtomicCut> cuts;
    WeakEmbeddingSpec embedding;
    std::vector<double> anchor; // image of the node's first build point
    double delta = 0.0;         // box half-width after translation (ℓ∞)

    // parameters fixed by the node statistics
    double r = 0.0;
    double c_lsh = 0.0;
    double beta = 0.0;
    double t_scale = 0.0;
    double p1 = 0.0;       // single-cut close-pair bound
    double p2 = 0.0;       // single-cut far bound at scale c_lsh·r
    double p2_tensor = 0.0; // p2^k
    double p2_prime = 0.0; // load fraction bound
    uint32_t k = 0;
    double load_bound = 0.0; // p2_prime · m, certified on the build set
    uint64_t rng_seed = 0;
    uint32_t attempts = 0; // sampling attempts until acceptance

    /// Key of an already-embedded image (translation and clamping applied here).
    uint64_t key_of_image(std::span<const double> image) const {
        uint64_t key = 0;
        for (size_t b = 0; b < cuts.size(); ++b) {
            double v = image[cuts[b].coord] - anchor[cuts[b].coord];
            v = std::clamp(v, -delta, delta);
            if (v <= cuts[b].threshold) key |= (uint64_t{1} << b);
        }
        return key;
    }

    /// Full evaluation: weak embedding, then the cuts.
    uint64_t evaluate(std::span<const double> x) const {
        auto image = evaluate_weak(embedding, x);
        return key_of_image(image);
    }

    void serialize(BinaryWriter& w) const {
        w.u8(1); // node-local spec table: one embedding entry
        embedding.serialize(w);
        w.u32(0); // reference into the table above
        w.u32(k);
        w.f64(delta);
        w.f64(r);
        w.f64(c_lsh);
        w.f64(beta);
        w.f64(t_scale);
        w.f64(p1);
        w.f64(p2);
        w.f64(p2_tensor);
        w.f64(p2_prime);
        w.f64(load_bound);
        w.u64(rng_seed);
        w.u32(attempts);
        write_f64_vector(w, anchor);
        for (const auto& cut : cuts) {
            w.u32(cut.coord);
            w.f64(cut.threshold);
        }
    }

    static EmpiricalHashFn deserialize(BinaryReader& rd, const MetricDescriptor& metric) {
        EmpiricalHashFn h;
        uint8_t table = rd.u8();
        if (table != 1) throw FormatError("hash: unexpected spec table size");
        h.embedding = WeakEmbeddingSpec::deserialize(rd, metric);
        if (rd.u32() != 0) throw FormatError("hash: bad spec reference");
        h.k = rd.u32();
        h.delta = rd.f64();
        h.r = rd.f64();
        h.c_lsh = rd.f64();
        h.beta = rd.f64();
        h.t_scale = rd.f64();
        h.p1 = rd.f64();
        h.p2 = rd.f64();
        h.p2_tensor = rd.f64();
        h.p2_prime = rd.f64();
        h.load_bound = rd.f64();
        h.rng_seed = rd.u64();
        h.attempts = rd.u32();
        h.anchor = read_f64_vector(rd);
        h.cuts.resize(h.k);
        for (auto& cut : h.cuts) {
            cut.coord = rd.u32();
            cut.threshold = rd.f64();
        }
        return h;
    }
};

namespace detail {

inline uint64_t max_bucket_load(const std::vector<uint64_t>& keys) {
    std::unordered_map<uint64_t, uint64_t> counts;
    uint64_t worst = 0;
    for (uint64_t key : keys) worst = std::max(worst, ++counts[key]);
    return worst;
}

} // namespace detail

/// Deterministic per-node calibration: box normalization, the weak-norm
/// scale t, the cut probabilities, the tensor width k and the certified
/// load bound. Shared by every tree that reaches the same point set.
struct HashCalibration {
    std::vector<double> anchor;
    double delta = 0.0;
    double t_scale = 0.0;
    double c_lsh = 0.0;
    double beta = 0.0;
    double p1 = 0.0;
    double p2 = 0.0;
    double p2_tensor = 0.0;
    double p2_prime = 0.0;
    double load_bound = 0.0;
    uint32_t k = 0;
    double r = 0.0;
};

inline HashCalibration calibrate_hash(const std::vector<double>& images, size_t count,
                                      size_t dim, double r, double big_d, double c) {
    if (count == 0 || images.size() != count * dim) {
        throw std::invalid_argument("calibrate_hash: bad image matrix");
    }
    HashCalibration cal;
    cal.r = r;

    // translate to the midpoint of the image bounding box: the smallest
    // delta with all build images inside [-delta, delta]^dim, which
    // keeps the tensor width k down
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < count; ++i) {
        for (size_t j = 0; j < dim; ++j) {
            lo[j] = std::min(lo[j], images[i * dim + j]);
            hi[j] = std::max(hi[j], images[i * dim + j]);
        }
    }
    cal.anchor.resize(dim);
    for (size_t j = 0; j < dim; ++j) {
        cal.anchor[j] = 0.5 * (lo[j] + hi[j]);
        cal.delta = std::max(cal.delta, 0.5 * (hi[j] - lo[j]));
    }

    std::vector<double> translated(images.size());
    for (size_t i = 0; i < count; ++i) {
        for (size_t j = 0; j < dim; ++j) {
            translated[i * dim + j] = images[i * dim + j] - cal.anchor[j];
        }
    }
    auto weak = weak_l1_norm_l1(translated, count, dim);
    cal.t_scale = weak.t_star;
    if (weak.value < c * r / (2.0 * big_d)) {
        throw DispersionError(
            "calibrate_hash: image weak norm " + std::to_string(weak.value) +
            " is below c*r/(2D) = " + std::to_string(c * r / (2.0 * big_d)) +
            "; the node's dispersion precondition did not hold");
    }

    cal.c_lsh = cal.t_scale / (2.0 * r);
    cal.beta = c * r / (4.0 * big_d * cal.t_scale);
    cal.p1 = 1.0 - r / (2.0 * static_cast<double>(dim) * cal.delta);
    cal.p2 = 1.0 - cal.c_lsh * r / (2.0 * static_cast<double>(dim) * cal.delta);
    if (!(cal.p1 > 0.0 && cal.p1 < 1.0) || !(cal.p2 > 0.0 && cal.p2 < 1.0)) {
        throw CalibrationError("calibrate_hash: degenerate cut probabilities");
    }
    cal.k = choose_tensor_k(cal.p2);
    if (cal.k > 64) {
        throw CalibrationError("calibrate_hash: tensor width k = " + std::to_string(cal.k) +
                               " exceeds the 64-bit key budget");
    }
    cal.p2_tensor = std::pow(cal.p2, static_cast<double>(cal.k));
    cal.p2_prime = std::sqrt(1.0 - cal.beta * (1.0 - 2.0 * cal.p2_tensor));
    cal.load_bound = cal.p2_prime * static_cast<double>(count);

    if (16.0 * r / cal.t_scale > 0.5) {
        throw CalibrationError("calibrate_hash: 16r/t = " +
                               std::to_string(16.0 * r / cal.t_scale) + " exceeds 1/2");
    }
    double rho =
        static_cast<double>(cal.k) * std::log(1.0 / cal.p1) / std::log(1.0 / cal.p2_prime);
    if (rho > 64.0 * big_d / c) {
        throw CalibrationError("calibrate_hash: rho = " + std::to_string(rho) +
                               " exceeds 64*D/c = " + std::to_string(64.0 * big_d / c));
    }
    return cal;
}

/// Samples cut sets until one meets the certified load bound on the
/// build images (acceptance probability >= 1/2 per attempt; the cap of
/// 64 failures signals a violated precondition, not bad luck).
inline EmpiricalHashFn sample_calibrated_hash(const HashCalibration& cal,
                                              const std::vector<double>& images, size_t count,
                                              size_t dim, uint64_t rng_seed) {
    EmpiricalHashFn h;
    h.anchor = cal.anchor;
    h.delta = cal.delta;
    h.r = cal.r;
    h.c_lsh = cal.c_lsh;
    h.beta = cal.beta;
    h.t_scale = cal.t_scale;
    h.p1 = cal.p1;
    h.p2 = cal.p2;
    h.p2_tensor = cal.p2_tensor;
    h.p2_prime = cal.p2_prime;
    h.k = cal.k;
    h.load_bound = cal.load_bound;
    h.rng_seed = rng_seed;

    Rng rng(rng_seed);
    std::vector<uint64_t> keys(count);
    for (uint32_t attempt = 1; attempt <= 64; ++attempt) {
        h.cuts.resize(h.k);
        for (auto& cut : h.cuts) {
            cut.coord = static_cast<uint32_t>(rng.below(dim));
            cut.threshold = rng.uniform(-cal.delta, cal.delta);
        }
        for (size_t i = 0; i < count; ++i) {
            std::span<const double> image(images.data() + i * dim, dim);
            keys[i] = h.key_of_image(image);
        }
        if (static_cast<double>(detail::max_bucket_load(keys)) <= h.load_bound) {
            h.attempts = attempt;
            return h;
        }
    }
    throw CalibrationError(
        "sample_calibrated_hash: 64 consecutive rejections (load bound " +
        std::to_string(h.load_bound) + " over " + std::to_string(count) + " images)");
}

/// Calibration and sampling in one call.
inline EmpiricalHashFn sample_empirical_hash(const std::vector<double>& images, size_t count,
                                             size_t dim, double r, double big_d, double c,
                                             uint64_t rng_seed) {
    auto cal = calibrate_hash(images, count, dim, r, big_d, c);
    return sample_calibrated_hash(cal, images, count, dim, rng_seed);
}

} // namespace adnn
