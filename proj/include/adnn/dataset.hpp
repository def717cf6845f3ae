#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adnn/detail/binary.hpp"
#include "adnn/metric.hpp"

namespace adnn {

inline constexpr uint16_t kDatasetFormatVersion = 1;

/// An immutable set of n points with d coordinates each, together with
/// the metric they live in. SchattenP points are symmetric matrices
/// flattened row-major (d is a perfect square); symmetry is validated
/// on construction.
class PointSet {
public:
    PointSet() = default;

    PointSet(size_t n, size_t dim, std::vector<double> coords, MetricDescriptor metric)
        : n_(n), dim_(dim), coords_(std::move(coords)), metric_(metric) {
        metric_.validate();
        if (coords_.size() != n_ * dim_) {
            throw std::invalid_argument("PointSet: coordinate count does not match n*d");
        }
        detail::check_finite(coords_, "PointSet");
        if (metric_.kind == MetricKind::SchattenP) {
            size_t side = detail::matrix_side(dim_, "PointSet");
            for (size_t i = 0; i < n_; ++i) {
                detail::check_symmetric(point(i), side, "PointSet");
            }
        }
    }

    size_t size() const { return n_; }
    size_t dim() const { return dim_; }
    const MetricDescriptor& metric() const { return metric_; }
    const std::vector<double>& coords() const { return coords_; }

    std::span<const double> point(size_t i) const {
        return {coords_.data() + i * dim_, dim_};
    }

    double dist(size_t i, size_t j) const {
        return distance(point(i), point(j), metric_);
    }

    double dist_to(size_t i, std::span<const double> q) const {
        return distance(point(i), q, metric_);
    }

    /// Same points under a different snowflake exponent.
    PointSet with_snowflake(double alpha) const {
        return PointSet(n_, dim_, coords_, metric_.snowflaked(alpha));
    }

    /// Subset by index list (order preserved).
    PointSet subset(const std::vector<size_t>& indices) const {
        std::vector<double> sub;
        sub.reserve(indices.size() * dim_);
        for (size_t i : indices) {
            auto pt = point(i);
            sub.insert(sub.end(), pt.begin(), pt.end());
        }
        return PointSet(indices.size(), dim_, std::move(sub), metric_);
    }

    void save(std::ostream& out) const {
        BinaryWriter w(out);
        write_body(w);
    }

    static PointSet load(std::istream& in) {
        BinaryReader r(in);
        return read_body(r);
    }

    void write_body(BinaryWriter& w) const {
        w.magic("ADNN");
        w.u16(kDatasetFormatVersion);
        w.u64(n_);
        w.u64(dim_);
        w.u8(static_cast<uint8_t>(metric_.kind));
        w.f64(metric_.p);
        w.f64(metric_.snowflake_alpha);
        for (double c : coords_) w.f64(c);
    }

    static PointSet read_body(BinaryReader& r) {
        r.expect_magic("ADNN", "dataset");
        uint16_t version = r.u16();
        if (version != kDatasetFormatVersion) throw FormatError("unsupported dataset version");
        uint64_t n = r.u64();
        uint64_t dim = r.u64();
        MetricDescriptor m;
        uint8_t kind = r.u8();
        if (kind > 1) throw FormatError("unknown metric kind");
        m.kind = static_cast<MetricKind>(kind);
        m.p = r.f64();
        m.snowflake_alpha = r.f64();
        std::vector<double> coords(n * dim);
        for (auto& c : coords) c = r.f64();
        return PointSet(n, dim, std::move(coords), m);
    }

    /// 64-bit content digest over the canonical serialized form.
    uint64_t digest() const {
        std::ostringstream buf;
        BinaryWriter w(buf);
        write_body(w);
        return w.checksum();
    }

private:
    size_t n_ = 0;
    size_t dim_ = 0;
    std::vector<double> coords_;
    MetricDescriptor metric_;
};

inline void save_dataset_file(const PointSet& points, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    points.save(out);
}

inline PointSet load_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return PointSet::load(in);
}

/// Parses comma-separated points, one per row. Blank lines and lines
/// starting with '#' are skipped. All rows must have equal width.
inline std::pair<size_t, std::vector<double>> parse_csv_points(std::istream& in) {
    std::vector<double> coords;
    size_t dim = 0, rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream row(line);
        std::string cell;
        size_t width = 0;
        while (std::getline(row, cell, ',')) {
            try {
                coords.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::invalid_argument("csv: cannot parse number: " + cell);
            }
            ++width;
        }
        if (width == 0) continue;
        if (dim == 0) {
            dim = width;
        } else if (width != dim) {
            throw std::invalid_argument("csv: inconsistent row width");
        }
        ++rows;
    }
    return {dim, std::move(coords)};
}

inline PointSet load_csv_points(std::istream& in, MetricDescriptor metric) {
    auto [dim, coords] = parse_csv_points(in);
    if (dim == 0) throw std::invalid_argument("csv: no points");
    size_t rows = coords.size() / dim;
    return PointSet(rows, dim, std::move(coords), metric);
}

} // namespace adnn
