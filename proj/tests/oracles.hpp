#pragma once

// Independent brute-force oracles. These intentionally avoid the
// library's sorted-grid evaluation paths: thresholds are enumerated
// pair by pair and every count is a fresh double loop.

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "adnn/dataset.hpp"

namespace adnn::testing {

inline double oracle_psi(const PointSet& points, double t) {
    size_t n = points.size();
    size_t count = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            if (points.dist(i, j) > t) ++count;
        }
    }
    return static_cast<double>(count) / (static_cast<double>(n) * static_cast<double>(n));
}

/// sup t·Ψ by scanning every pair distance as a candidate threshold.
/// The distance matrix is evaluated once up front; every count is a
/// fresh quadratic scan over it.
inline std::pair<double, double> oracle_weak_l1(const PointSet& points) {
    size_t n = points.size();
    std::vector<double> dist(n * n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) dist[i * n + j] = points.dist(i, j);
    }
    double best_value = 0.0, best_t = 0.0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double delta = dist[i * n + j];
            if (delta <= 0.0) continue;
            size_t at_least = 0;
            for (double d : dist) {
                if (d >= delta) ++at_least;
            }
            double tail = static_cast<double>(at_least) /
                          (static_cast<double>(n) * static_cast<double>(n));
            double value = delta * tail;
            if (value > best_value || (value == best_value && best_value > 0.0 && delta < best_t)) {
                best_value = value;
                best_t = delta;
            }
        }
    }
    return {best_t, best_value};
}

/// Smallest realized radius capturing a strict majority, by direct scan.
inline double oracle_majority_radius(const PointSet& points, std::span<const double> x) {
    size_t n = points.size();
    std::vector<double> dists(n);
    for (size_t i = 0; i < n; ++i) dists[i] = points.dist_to(i, x);
    double best = std::numeric_limits<double>::infinity();
    for (double candidate : dists) {
        size_t inside = 0;
        for (double d : dists) {
            if (d <= candidate) ++inside;
        }
        if (2 * inside > n && candidate < best) best = candidate;
    }
    return best;
}

} // namespace adnn::testing
