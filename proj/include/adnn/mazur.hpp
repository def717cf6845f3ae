#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "adnn/dataset.hpp"
#include "adnn/detail/binary.hpp"
#include "adnn/metric.hpp"

namespace adnn {

namespace detail {

// sign(v)·|v|^e with a zero guard below 1e-300 so the log-domain pow
// never sees a true zero.
inline double signed_pow(double v, double e) {
    double a = std::abs(v);
    if (a < 1e-300) return 0.0;
    double r = std::pow(a, e);
    return v < 0.0 ? -r : r;
}

} // namespace detail

/// Coordinate-wise signed power map: sign(x_i)·|x_i|^{p/q}.
/// Satisfies ‖output‖_q^q = ‖x‖_p^p and preserves signs.
inline std::vector<double> mazur_map(std::span<const double> x, double p, double q) {
    if (!(p >= 1.0 && q >= 1.0)) throw std::invalid_argument("mazur_map: p, q must be >= 1");
    const double e = p / q;
    std::vector<double> out(x.size());
    if (e == 1.0) {
        std::copy(x.begin(), x.end(), out.begin());
        return out;
    }
    for (size_t i = 0; i < x.size(); ++i) out[i] = detail::signed_pow(x[i], e);
    return out;
}

/// Degree-1 radial extension of the Mazur map:
/// ‖x‖_p · M_{p,q}(x / ‖x‖_p), with 0 ↦ 0. Norm-preserving:
/// ‖output‖_q = ‖x‖_p exactly.
inline std::vector<double> rescaled_mazur(std::span<const double> x, double p, double q) {
    if (!(p >= q && q >= 1.0)) throw std::invalid_argument("rescaled_mazur: need p >= q >= 1");
    double norm = lp_norm(x, p);
    if (norm == 0.0) return std::vector<double>(x.size(), 0.0);
    std::vector<double> unit(x.size());
    for (size_t i = 0; i < x.size(); ++i) unit[i] = x[i] / norm;
    auto out = mazur_map(unit, p, q);
    for (auto& v : out) v *= norm;
    return out;
}

/// Per-coordinate median of P: the middle order statistic for odd n,
/// the midpoint of the two middle order statistics for even n. Points
/// equal to the median value count in neither side of the balance.
inline std::vector<double> coordinate_median_shift(const PointSet& points) {
    if (points.metric().kind != MetricKind::Lp) {
        throw std::invalid_argument("coordinate_median_shift: Lp point sets only");
    }
    const size_t n = points.size();
    const size_t d = points.dim();
    if (n == 0) throw std::invalid_argument("coordinate_median_shift: empty point set");
    std::vector<double> shift(d);
    std::vector<double> column(n);
    for (size_t i = 0; i < d; ++i) {
        for (size_t j = 0; j < n; ++j) column[j] = points.point(j)[i];
        std::sort(column.begin(), column.end());
        if (n % 2 == 1) {
            shift[i] = column[n / 2];
        } else {
            shift[i] = 0.5 * (column[n / 2 - 1] + column[n / 2]);
        }
    }
    return shift;
}

/// A shifted rescaled Mazur map g(x) = M̃_{p,q}(x − shift), together
/// with its certified Lipschitz upper bound.
struct ShiftedMazurSpec {
    double p = 2.0;
    double q = 1.0;
    std::vector<double> shift;
    double lip_bound = 1.0;

    void serialize(BinaryWriter& w) const {
        w.u8(1);
        w.f64(p);
        w.f64(q);
        write_f64_vector(w, shift);
    }

    static ShiftedMazurSpec deserialize(BinaryReader& r) {
        if (r.u8() != 1) throw FormatError("expected ShiftedMazur spec tag");
        ShiftedMazurSpec spec;
        spec.p = r.f64();
        spec.q = r.f64();
        spec.shift = read_f64_vector(r);
        spec.lip_bound = mazur_lip_bound(spec.p, spec.q);
        return spec;
    }

    static double mazur_lip_bound(double p, double q) {
        return 1.0 + std::pow(2.0, 1.0 + 1.0 / q - 1.0 / p) * (p / q);
    }
};

/// Median-shifted rescaled Mazur embedding of an Lp point set into
/// ℓ_{q_target}.
inline ShiftedMazurSpec build_lp_embedding(const PointSet& points, double q_target) {
    const auto& m = points.metric();
    if (m.kind != MetricKind::Lp) throw std::invalid_argument("build_lp_embedding: Lp metric required");
    if (m.snowflake_alpha != 1.0) {
        throw std::invalid_argument("build_lp_embedding: snowflaked inputs are not supported");
    }
    if (!(m.p >= q_target && q_target >= 1.0)) {
        throw std::invalid_argument("build_lp_embedding: need p >= q_target >= 1");
    }
    ShiftedMazurSpec spec;
    spec.p = m.p;
    spec.q = q_target;
    spec.shift = coordinate_median_shift(points);
    spec.lip_bound = ShiftedMazurSpec::mazur_lip_bound(m.p, q_target);
    return spec;
}

/// g(x) = M̃_{p,q}(x − shift).
inline std::vector<double> evaluate_embedding(const ShiftedMazurSpec& spec,
                                              std::span<const double> x) {
    if (x.size() != spec.shift.size()) {
        throw std::invalid_argument("evaluate_embedding: dimension mismatch");
    }
    std::vector<double> centered(x.size());
    for (size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - spec.shift[i];
    return rescaled_mazur(centered, spec.p, spec.q);
}

/// Empirical q-average distortion witness. The max pair expansion
/// stands in for the Lipschitz constant, so this is a data-dependent
/// lower bound on the true distortion; it is what the acceptance
/// thresholds are calibrated against.
struct DistortionReport {
    double max_pair_expansion = 0.0;
    double sum_ratio_q = 0.0; // (ΣΣ input^q) / (ΣΣ output^q)
    double d_empirical = 0.0; // max_pair_expansion · sum_ratio_q^{1/q}
};

inline DistortionReport measure_q_avg_distortion(const PointSet& points,
                                                 const std::vector<double>& images,
                                                 size_t image_dim, double q,
                                                 double output_norm) {
    const size_t n = points.size();
    if (n < 2) throw std::invalid_argument("measure_q_avg_distortion: need n >= 2");
    if (images.size() != n * image_dim) {
        throw std::invalid_argument("measure_q_avg_distortion: image matrix shape mismatch");
    }
    double max_expansion = 0.0;
    double sum_in = 0.0, sum_out = 0.0;
    bool any_distinct = false;
    std::vector<double> diff(image_dim);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double din = points.dist(i, j);
            const double* a = images.data() + i * image_dim;
            const double* b = images.data() + j * image_dim;
            for (size_t k = 0; k < image_dim; ++k) diff[k] = a[k] - b[k];
            double dout = lp_norm(diff, output_norm);
            if (din > 0.0) {
                any_distinct = true;
                max_expansion = std::max(max_expansion, dout / din);
            }
            sum_in += 2.0 * (q == 1.0 ? din : std::pow(din, q));
            sum_out += 2.0 * (q == 1.0 ? dout : std::pow(dout, q));
        }
    }
    if (!any_distinct) {
        throw std::invalid_argument("measure_q_avg_distortion: all points identical");
    }
    DistortionReport report;
    report.max_pair_expansion = max_expansion;
    if (sum_out == 0.0) {
        report.sum_ratio_q = std::numeric_limits<double>::infinity();
        report.d_empirical = std::numeric_limits<double>::infinity();
        return report;
    }
    report.sum_ratio_q = sum_in / sum_out;
    report.d_empirical = max_expansion * std::pow(report.sum_ratio_q, 1.0 / q);
    return report;
}

} // namespace adnn
