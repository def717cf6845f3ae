#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "adnn/dataset.hpp"

namespace adnn {

/// Tail statistics of the ordered-pair distance distribution.
/// Fractions use denominator n² and count self-pairs (distance 0).
struct PairStats {
    std::vector<double> sorted_distinct_distances;
    std::vector<double> tail_fractions; // fraction of ordered pairs at distance >= the matching entry
};

namespace detail {

inline std::vector<double> all_pair_distances(const PointSet& points) {
    const size_t n = points.size();
    std::vector<double> dists;
    dists.reserve(n * n);
    for (size_t i = 0; i < n; ++i) {
        dists.push_back(0.0); // self-pair
        for (size_t j = i + 1; j < n; ++j) {
            double d = points.dist(i, j);
            dists.push_back(d);
            dists.push_back(d);
        }
    }
    return dists;
}

inline PairStats stats_from_distances(std::vector<double> dists, size_t count) {
    std::sort(dists.begin(), dists.end());
    PairStats stats;
    const double total = static_cast<double>(count) * static_cast<double>(count);
    size_t i = 0;
    while (i < dists.size()) {
        size_t j = i;
        while (j < dists.size() && dists[j] == dists[i]) ++j;
        stats.sorted_distinct_distances.push_back(dists[i]);
        stats.tail_fractions.push_back(static_cast<double>(dists.size() - i) / total);
        i = j;
    }
    return stats;
}

} // namespace detail

/// Builds the distinct-distance grid and tail fractions for P.
inline PairStats pair_stats(const PointSet& points) {
    const size_t n = points.size();
    if (n == 0) throw std::invalid_argument("pair_stats: empty point set");
    return detail::stats_from_distances(detail::all_pair_distances(points), n);
}

/// Ψ(P, t): exact fraction of ordered pairs at distance strictly
/// greater than t (self-pairs count in the denominator).
inline double psi(const PointSet& points, double t) {
    if (t < 0.0) throw std::invalid_argument("psi: t must be >= 0");
    const size_t n = points.size();
    size_t over = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            if (points.dist(i, j) > t) over += 2;
        }
    }
    return static_cast<double>(over) / (static_cast<double>(n) * static_cast<double>(n));
}

struct WeakL1Result {
    double t_star = 0.0;
    double value = 0.0;
};

namespace detail {

inline WeakL1Result weak_l1_from_stats(const PairStats& stats) {
    WeakL1Result best;
    for (size_t i = 0; i < stats.sorted_distinct_distances.size(); ++i) {
        double delta = stats.sorted_distinct_distances[i];
        if (delta <= 0.0) continue;
        double candidate = delta * stats.tail_fractions[i];
        if (candidate > best.value) {
            best.value = candidate;
            best.t_star = delta;
        }
    }
    return best;
}

} // namespace detail

/// sup_{t≥0} t·Ψ(P,t), evaluated exactly as max over distinct distances
/// δ of δ·(fraction of pairs at distance ≥ δ). Ties break toward the
/// smallest maximizing δ. Returns (0,0) when all points coincide.
inline WeakL1Result weak_l1_norm(const PointSet& points) {
    return detail::weak_l1_from_stats(pair_stats(points));
}

namespace detail {

inline double l1_dist_row(const std::vector<double>& m, size_t dim, size_t i, size_t j) {
    const double* a = m.data() + i * dim;
    const double* b = m.data() + j * dim;
    double acc = 0.0;
    for (size_t k = 0; k < dim; ++k) acc += std::abs(a[k] - b[k]);
    return acc;
}

} // namespace detail

/// pair_stats over an explicit row-major image matrix under ℓ1.
inline PairStats pair_stats_l1(const std::vector<double>& images, size_t count, size_t dim) {
    if (count == 0) throw std::invalid_argument("pair_stats_l1: empty image set");
    std::vector<double> dists;
    dists.reserve(count * count);
    for (size_t i = 0; i < count; ++i) {
        dists.push_back(0.0);
        for (size_t j = i + 1; j < count; ++j) {
            double d = detail::l1_dist_row(images, dim, i, j);
            dists.push_back(d);
            dists.push_back(d);
        }
    }
    return detail::stats_from_distances(std::move(dists), count);
}

/// weak_l1_norm over an explicit row-major image matrix under ℓ1.
inline WeakL1Result weak_l1_norm_l1(const std::vector<double>& images, size_t count, size_t dim) {
    return detail::weak_l1_from_stats(pair_stats_l1(images, count, dim));
}

/// Smallest radius s with |P ∩ B(x,s)| > n/2 (closed ball): the
/// (⌊n/2⌋+1)-th smallest of the n distances from x to P.
inline double majority_radius(const PointSet& points, std::span<const double> x) {
    const size_t n = points.size();
    if (n == 0) throw std::invalid_argument("majority_radius: empty point set");
    std::vector<double> dists(n);
    for (size_t i = 0; i < n; ++i) dists[i] = points.dist_to(i, x);
    size_t rank = n / 2; // zero-based index of the (⌊n/2⌋+1)-th smallest
    std::nth_element(dists.begin(), dists.begin() + static_cast<ptrdiff_t>(rank), dists.end());
    return dists[rank];
}

struct CentralPoint {
    size_t index = 0;
    double radius = 0.0; // s(x*) at the chosen center
};

/// argmin over x ∈ P of majority_radius(P, x); ties break to the
/// smallest index.
inline CentralPoint central_point(const PointSet& points) {
    const size_t n = points.size();
    if (n == 0) throw std::invalid_argument("central_point: empty point set");
    CentralPoint best{0, majority_radius(points, points.point(0))};
    for (size_t i = 1; i < n; ++i) {
        double s = majority_radius(points, points.point(i));
        if (s < best.radius) best = {i, s};
    }
    return best;
}

/// Certified (t,β)-dispersion: every data-centered ball of radius 2t
/// holds at most (1−β)n points. Sufficient for dispersion over the
/// whole space; closed balls throughout.
inline bool is_dispersed(const PointSet& points, double t, double beta) {
    if (t < 0.0) throw std::invalid_argument("is_dispersed: t must be >= 0");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("is_dispersed: beta must be in (0,1)");
    const size_t n = points.size();
    const double cap = (1.0 - beta) * static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
        size_t inside = 0;
        for (size_t j = 0; j < n; ++j) {
            if (points.dist(i, j) <= 2.0 * t) {
                ++inside;
                if (static_cast<double>(inside) > cap) return false;
            }
        }
    }
    return true;
}

struct NearestNeighbor {
    size_t index = 0;
    double distance = 0.0;
};

/// Exact nearest point by linear scan; ties break to the smallest index.
inline NearestNeighbor brute_force_nn(const PointSet& points, std::span<const double> q) {
    const size_t n = points.size();
    if (n == 0) throw std::invalid_argument("brute_force_nn: empty point set");
    NearestNeighbor best{0, points.dist_to(0, q)};
    for (size_t i = 1; i < n; ++i) {
        double d = points.dist_to(i, q);
        if (d < best.distance) best = {i, d};
    }
    return best;
}

/// (1/n²)·ΣΣ dist(x,y) over ordered pairs.
inline double mean_pairwise_distance(const PointSet& points) {
    const size_t n = points.size();
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) sum += 2.0 * points.dist(i, j);
    }
    return sum / (static_cast<double>(n) * static_cast<double>(n));
}

inline double diameter(const PointSet& points) {
    const size_t n = points.size();
    double best = 0.0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) best = std::max(best, points.dist(i, j));
    }
    return best;
}

} // namespace adnn
