#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace adnn {

enum class MetricKind : uint8_t {
    Lp = 0,       // ℓ_p on R^d
    SchattenP = 1 // Schatten-p on symmetric matrices, stored row-major with d*d coordinates
};

// Absolute tolerance for accepting a nearly-symmetric matrix; anything
// worse is rejected rather than silently symmetrized.
inline constexpr double kSymmetryTolerance = 1e-9;

/// Which distance is in force: the norm exponent p and an optional
/// snowflake (distances raised to the power alpha ∈ (0,1]).
struct MetricDescriptor {
    MetricKind kind = MetricKind::Lp;
    double p = 2.0;
    double snowflake_alpha = 1.0;

    void validate() const {
        if (!(p >= 1.0)) throw std::invalid_argument("metric: p must be >= 1");
        if (!(snowflake_alpha > 0.0 && snowflake_alpha <= 1.0)) {
            throw std::invalid_argument("metric: snowflake_alpha must be in (0,1]");
        }
    }

    /// Same metric with the snowflake exponent replaced.
    MetricDescriptor snowflaked(double alpha) const {
        MetricDescriptor m = *this;
        m.snowflake_alpha = alpha;
        m.validate();
        return m;
    }

    bool operator==(const MetricDescriptor&) const = default;
};

namespace detail {

inline void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite coordinate");
    }
}

// Σ|v_i|^p without the final 1/p root. Fast paths for the common
// exponents; general case via exp/log.
inline double sum_abs_pow(std::span<const double> x, std::span<const double> y, double p) {
    const size_t d = x.size();
    double acc = 0.0;
    if (p == 1.0) {
        for (size_t i = 0; i < d; ++i) acc += std::abs(x[i] - y[i]);
    } else if (p == 2.0) {
        for (size_t i = 0; i < d; ++i) {
            double t = x[i] - y[i];
            acc += t * t;
        }
    } else if (p == 4.0) {
        for (size_t i = 0; i < d; ++i) {
            double t = x[i] - y[i];
            t *= t;
            acc += t * t;
        }
    } else {
        for (size_t i = 0; i < d; ++i) {
            double t = std::abs(x[i] - y[i]);
            if (t > 0.0) acc += std::pow(t, p);
        }
    }
    return acc;
}

inline double lp_norm_of_diff(std::span<const double> x, std::span<const double> y, double p) {
    double s = sum_abs_pow(x, y, p);
    if (s == 0.0) return 0.0;
    if (p == 1.0) return s;
    if (p == 2.0) return std::sqrt(s);
    return std::pow(s, 1.0 / p);
}

inline size_t matrix_side(size_t coords, const char* what) {
    auto side = static_cast<size_t>(std::llround(std::sqrt(static_cast<double>(coords))));
    if (side * side != coords) {
        throw std::invalid_argument(std::string(what) + ": coordinate count is not a perfect square");
    }
    return side;
}

inline void check_symmetric(std::span<const double> m, size_t side, const char* what) {
    for (size_t i = 0; i < side; ++i) {
        for (size_t j = i + 1; j < side; ++j) {
            if (std::abs(m[i * side + j] - m[j * side + i]) > kSymmetryTolerance) {
                throw std::invalid_argument(std::string(what) + ": matrix is not symmetric");
            }
        }
    }
}

// Loads a flattened matrix as symmetrized (A + Aᵀ)/2. Callers validate
// the asymmetry tolerance separately.
inline Eigen::MatrixXd to_symmetric(std::span<const double> m, size_t side) {
    Eigen::MatrixXd a(side, side);
    for (size_t i = 0; i < side; ++i) {
        for (size_t j = 0; j < side; ++j) {
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i * side + j];
        }
    }
    return 0.5 * (a + a.transpose());
}

} // namespace detail

/// Eigenvalues of a flattened symmetric matrix, ascending.
inline std::vector<double> symmetric_eigenvalues(std::span<const double> m) {
    size_t side = detail::matrix_side(m.size(), "symmetric_eigenvalues");
    detail::check_symmetric(m, side, "symmetric_eigenvalues");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(detail::to_symmetric(m, side),
                                                          Eigen::EigenvaluesOnly);
    std::vector<double> out(side);
    for (size_t i = 0; i < side; ++i) out[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
    return out;
}

/// ℓ_p norm of the eigenvalues of the flattened symmetric matrix `m`.
inline double schatten_norm(std::span<const double> m, double p) {
    auto eigs = symmetric_eigenvalues(m);
    double acc = 0.0;
    for (double lambda : eigs) {
        double t = std::abs(lambda);
        if (t > 0.0) acc += (p == 1.0) ? t : (p == 2.0 ? t * t : std::pow(t, p));
    }
    if (acc == 0.0) return 0.0;
    if (p == 1.0) return acc;
    if (p == 2.0) return std::sqrt(acc);
    return std::pow(acc, 1.0 / p);
}

/// Distance between two points under `m`, snowflake included.
/// Lp: ‖x−y‖_p^alpha. SchattenP: (ℓ_p norm of eigenvalues of X−Y)^alpha.
inline double distance(std::span<const double> x, std::span<const double> y,
                       const MetricDescriptor& m) {
    if (x.size() != y.size()) throw std::invalid_argument("distance: dimension mismatch");
    m.validate();
    detail::check_finite(x, "distance");
    detail::check_finite(y, "distance");
    double base;
    if (m.kind == MetricKind::Lp) {
        base = detail::lp_norm_of_diff(x, y, m.p);
    } else {
        std::vector<double> diff(x.size());
        for (size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
        base = schatten_norm(diff, m.p);
    }
    if (m.snowflake_alpha == 1.0 || base == 0.0) return base;
    return std::pow(base, m.snowflake_alpha);
}

/// ℓ_p norm of a vector (no snowflake); shared by the embedding modules.
inline double lp_norm(std::span<const double> x, double p) {
    double acc = 0.0;
    if (p == 1.0) {
        for (double v : x) acc += std::abs(v);
        return acc;
    }
    if (p == 2.0) {
        for (double v : x) acc += v * v;
        return std::sqrt(acc);
    }
    for (double v : x) {
        double t = std::abs(v);
        if (t > 0.0) acc += std::pow(t, p);
    }
    return acc == 0.0 ? 0.0 : std::pow(acc, 1.0 / p);
}

} // namespace adnn
