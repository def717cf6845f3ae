#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "adnn/dataset.hpp"
#include "adnn/detail/binary.hpp"
#include "adnn/metric.hpp"

namespace adnn {

namespace detail {

// Relative eigenvalue cutoff: magnitudes below 1e-12·‖X‖_C2 are treated
// as zero so fractional powers do not pick up sign noise.
inline constexpr double kEigenCutoff = 1e-12;

inline Eigen::MatrixXd matrix_from_flat(std::span<const double> flat) {
    size_t side = matrix_side(flat.size(), "schatten");
    return to_symmetric(flat, side);
}

inline std::vector<double> flatten(const Eigen::MatrixXd& m) {
    std::vector<double> out(static_cast<size_t>(m.rows() * m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out[static_cast<size_t>(i) * static_cast<size_t>(m.cols()) + static_cast<size_t>(j)] =
                m(i, j);
        }
    }
    return out;
}

// Applies sign(λ)|λ|^e to the spectrum of a symmetric matrix.
inline Eigen::MatrixXd spectral_signed_pow(const Eigen::MatrixXd& x, double e) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x);
    Eigen::VectorXd lambda = solver.eigenvalues();
    double frob = lambda.norm();
    double cutoff = kEigenCutoff * frob;
    Eigen::VectorXd mapped(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        double v = lambda(i);
        if (std::abs(v) <= cutoff) {
            mapped(i) = 0.0;
        } else {
            double r = std::pow(std::abs(v), e);
            mapped(i) = v < 0.0 ? -r : r;
        }
    }
    return solver.eigenvectors() * mapped.asDiagonal() * solver.eigenvectors().transpose();
}

// Σ|λ_i|^q for a symmetric matrix.
inline double schatten_pow_sum(const Eigen::MatrixXd& x, double q) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x, Eigen::EigenvaluesOnly);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
        double t = std::abs(solver.eigenvalues()(i));
        if (t > 0.0) acc += std::pow(t, q);
    }
    return acc;
}

} // namespace detail

/// The points of a SchattenP set as symmetric Eigen matrices.
inline std::vector<Eigen::MatrixXd> schatten_matrices(const PointSet& points) {
    if (points.metric().kind != MetricKind::SchattenP) {
        throw std::invalid_argument("schatten: SchattenP point set required");
    }
    std::vector<Eigen::MatrixXd> out;
    out.reserve(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        out.push_back(detail::matrix_from_flat(points.point(i)));
    }
    return out;
}

/// Non-commutative Mazur map M_{p,2}: acts as sign(λ)|λ|^{p/2} on the
/// spectrum. ‖output‖_C2 = ‖X‖_Cp^{p/2}; p = 2 is the identity.
inline Eigen::MatrixXd nc_mazur_map(const Eigen::MatrixXd& x, double p) {
    if (x.rows() != x.cols()) throw std::invalid_argument("nc_mazur_map: square matrix required");
    if ((x - x.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
        throw std::invalid_argument("nc_mazur_map: matrix is not symmetric");
    }
    Eigen::MatrixXd sym = 0.5 * (x + x.transpose());
    if (p == 2.0) return sym;
    return detail::spectral_signed_pow(sym, p / 2.0);
}

/// Flattened-input convenience overload.
inline std::vector<double> nc_mazur_map(std::span<const double> x_flat, double p) {
    size_t side = detail::matrix_side(x_flat.size(), "nc_mazur_map");
    detail::check_symmetric(x_flat, side, "nc_mazur_map");
    return detail::flatten(nc_mazur_map(detail::to_symmetric(x_flat, side), p));
}

/// The shift objective of the solver: f(T) = (1/n)·Σ ‖X−T‖_{C_q}^q with
/// q = p/2 + 1. Convex; its gradient is −(q/n)·Σ M_{p,2}(X−T).
inline double schatten_shift_objective(const std::vector<Eigen::MatrixXd>& matrices,
                                       const Eigen::MatrixXd& t, double p) {
    const double q = p / 2.0 + 1.0;
    double acc = 0.0;
    for (const auto& x : matrices) acc += detail::schatten_pow_sum(x - t, q);
    return acc / static_cast<double>(matrices.size());
}

/// (1/n)·Σ M_{p,2}(X−T); the negated gradient of the objective divided
/// by q, and the quantity whose C2 norm is the stopping residual.
inline Eigen::MatrixXd schatten_mean_image(const std::vector<Eigen::MatrixXd>& matrices,
                                           const Eigen::MatrixXd& t, double p) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(t.rows(), t.cols());
    for (const auto& x : matrices) acc += nc_mazur_map(Eigen::MatrixXd(x - t), p);
    return acc / static_cast<double>(matrices.size());
}

struct ShiftSolveResult {
    Eigen::MatrixXd shift;
    double residual = 0.0;
    size_t iterations = 0;
    bool converged = false;
};

/// First-order minimization of the shift objective: steepest descent
/// with Armijo backtracking (constant 1e-4, halving steps), warm-started
/// step sizes, initialized at the entrywise mean. Stops when
/// ‖(1/n)·Σ M_{p,2}(X−T)‖_C2 ≤ eps.
inline ShiftSolveResult schatten_shift_solve(const std::vector<Eigen::MatrixXd>& matrices,
                                             double p, double eps, size_t max_iters) {
    if (matrices.empty()) throw std::invalid_argument("schatten_shift_solve: empty input");
    if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("schatten_shift_solve: p in [1,2] required");
    if (!(eps > 0.0)) throw std::invalid_argument("schatten_shift_solve: eps must be positive");
    const double q = p / 2.0 + 1.0;
    const double armijo = 1e-4;

    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(matrices[0].rows(), matrices[0].cols());
    for (const auto& x : matrices) t += x;
    t /= static_cast<double>(matrices.size());

    double value = schatten_shift_objective(matrices, t, p);
    double step = 1.0;
    ShiftSolveResult result;
    for (size_t iter = 0; iter < max_iters; ++iter) {
        Eigen::MatrixXd mean_image = schatten_mean_image(matrices, t, p);
        double residual = mean_image.norm();
        if (residual <= eps) {
            result.shift = t;
            result.residual = residual;
            result.iterations = iter;
            result.converged = true;
            return result;
        }
        // descent direction = mean image (= −∇f/q)
        double grad_sq = q * q * residual * residual;
        double s = step * 2.0;
        bool moved = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            Eigen::MatrixXd candidate = t + s * q * mean_image;
            double candidate_value = schatten_shift_objective(matrices, candidate, p);
            if (candidate_value <= value - armijo * s * grad_sq) {
                t = candidate;
                value = candidate_value;
                step = s;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if (!moved) {
            result.shift = t;
            result.residual = residual;
            result.iterations = iter;
            result.converged = false;
            return result;
        }
    }
    result.shift = t;
    result.residual = schatten_mean_image(matrices, t, p).norm();
    result.iterations = max_iters;
    result.converged = result.residual <= eps;
    return result;
}

/// Shifted non-commutative Mazur embedding of symmetric matrices into
/// ℓ2 of dimension d² (Schatten-2 coordinates).
struct SchattenMazurSpec {
    double p = 1.0;
    size_t side = 0;
    std::vector<double> shift_flat; // d×d symmetric, row-major
    double residual = 0.0;
    double target_eps = 0.0;

    Eigen::MatrixXd shift_matrix() const {
        return detail::to_symmetric(shift_flat, side);
    }

    void serialize(BinaryWriter& w) const {
        w.u8(3);
        w.f64(p);
        w.u64(side);
        for (double v : shift_flat) w.f64(v);
        w.f64(residual);
        w.f64(target_eps);
    }

    static SchattenMazurSpec deserialize(BinaryReader& r) {
        if (r.u8() != 3) throw FormatError("expected SchattenMazur spec tag");
        SchattenMazurSpec spec;
        spec.p = r.f64();
        spec.side = r.u64();
        spec.shift_flat.resize(spec.side * spec.side);
        for (auto& v : spec.shift_flat) v = r.f64();
        spec.residual = r.f64();
        spec.target_eps = r.f64();
        return spec;
    }
};

inline constexpr size_t kDefaultSchattenMaxIters = 200000;

/// Builds the Schatten embedding for 1 ≤ p ≤ 2: solves for the shift T,
/// with eps capped by half the mean pairwise (p/2)-snowflaked distance.
inline SchattenMazurSpec build_schatten_embedding(const PointSet& points, double p) {
    if (!(p >= 1.0 && p <= 2.0)) {
        throw std::invalid_argument("build_schatten_embedding: p in [1,2] required");
    }
    if (points.size() < 2) throw std::invalid_argument("build_schatten_embedding: need n >= 2");
    auto matrices = schatten_matrices(points);
    const size_t n = matrices.size();

    double snow_sum = 0.0;
    bool any_distinct = false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double base = std::pow(detail::schatten_pow_sum(matrices[i] - matrices[j], p), 1.0 / p);
            if (base > 0.0) any_distinct = true;
            snow_sum += 2.0 * std::pow(base, p / 2.0);
        }
    }
    if (!any_distinct) throw std::invalid_argument("build_schatten_embedding: all points identical");
    double eps_cap = 0.5 * snow_sum / (2.0 * static_cast<double>(n) * static_cast<double>(n));
    double eps = std::min(1e-6, eps_cap);

    auto solved = schatten_shift_solve(matrices, p, eps, kDefaultSchattenMaxIters);
    if (!solved.converged) {
        throw std::runtime_error("build_schatten_embedding: shift solver did not reach eps (residual " +
                                 std::to_string(solved.residual) + ")");
    }
    SchattenMazurSpec spec;
    spec.p = p;
    spec.side = static_cast<size_t>(solved.shift.rows());
    spec.shift_flat = detail::flatten(solved.shift);
    spec.residual = solved.residual;
    spec.target_eps = eps;
    return spec;
}

/// g(X) = M_{p,2}(X − T), flattened to d² Euclidean coordinates.
inline std::vector<double> evaluate_schatten_embedding(const SchattenMazurSpec& spec,
                                                       std::span<const double> x_flat) {
    if (x_flat.size() != spec.side * spec.side) {
        throw std::invalid_argument("evaluate_schatten_embedding: dimension mismatch");
    }
    Eigen::MatrixXd x = detail::to_symmetric(x_flat, spec.side);
    return detail::flatten(nc_mazur_map(Eigen::MatrixXd(x - spec.shift_matrix()), spec.p));
}

} // namespace adnn
