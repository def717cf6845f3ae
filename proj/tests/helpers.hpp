#pragma once

#include <cstdint>
#include <vector>

#include "adnn/dataset.hpp"
#include "adnn/detail/rng.hpp"

namespace adnn::testing {

/// Gaussian cloud in ℓ_p.
inline PointSet random_lp_cloud(size_t n, size_t d, double p, uint64_t seed,
                                double spread = 1.0) {
    Rng rng(seed);
    std::vector<double> coords(n * d);
    for (auto& c : coords) c = spread * rng.normal();
    return PointSet(n, d, std::move(coords), {MetricKind::Lp, p, 1.0});
}

/// Uniform cloud on [0, side]^d in ℓ_p.
inline PointSet uniform_lp_cloud(size_t n, size_t d, double p, uint64_t seed,
                                 double side = 1.0) {
    Rng rng(seed);
    std::vector<double> coords(n * d);
    for (auto& c : coords) c = rng.uniform(0.0, side);
    return PointSet(n, d, std::move(coords), {MetricKind::Lp, p, 1.0});
}

inline std::vector<double> random_symmetric_flat(size_t side, Rng& rng, double spread = 1.0) {
    std::vector<double> m(side * side);
    for (size_t i = 0; i < side; ++i) {
        for (size_t j = i; j < side; ++j) {
            double v = spread * rng.normal();
            m[i * side + j] = v;
            m[j * side + i] = v;
        }
    }
    return m;
}

/// Cloud of symmetrized Gaussian matrices under Schatten-p.
inline PointSet random_schatten_cloud(size_t n, size_t side, double p, uint64_t seed,
                                      double alpha = 1.0, double spread = 1.0) {
    Rng rng(seed);
    std::vector<double> coords;
    coords.reserve(n * side * side);
    for (size_t i = 0; i < n; ++i) {
        auto m = random_symmetric_flat(side, rng, spread);
        coords.insert(coords.end(), m.begin(), m.end());
    }
    return PointSet(n, side * side, std::move(coords), {MetricKind::SchattenP, p, alpha});
}

/// One-dimensional ℓ1 point set from a value list.
inline PointSet line_points(std::vector<double> values) {
    size_t n = values.size();
    return PointSet(n, 1, std::move(values), {MetricKind::Lp, 1.0, 1.0});
}

} // namespace adnn::testing
