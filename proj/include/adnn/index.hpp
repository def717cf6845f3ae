#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "adnn/dataset.hpp"
#include "adnn/detail/binary.hpp"
#include "adnn/detail/rng.hpp"
#include "adnn/lsh.hpp"
#include "adnn/stats.hpp"
#include "adnn/weak_embedding.hpp"

namespace adnn {

inline constexpr uint16_t kIndexFormatVersion = 1;

/// Calibrated weak-distortion bound for a metric: 8p for ℓ_p, 8 for
/// (snowflaked) Schatten-p.
inline double calibrated_distortion(const MetricDescriptor& metric) {
    return metric.kind == MetricKind::Lp ? 8.0 * metric.p : 8.0;
}

/// Build-time parameters. Zero-valued c / k_trees / level_cap mean
/// "derive the default at build": c = 64·D/eps, k = ⌈3·n^eps⌉,
/// level cap = ⌈log_{1/b} n⌉ with b = max(1/2, 1 − cr/(16·D·Δ)).
struct BuildParams {
    double r = 1.0;
    double eps_exponent = 0.5;
    double c = 0.0;
    double d_cal = 0.0;
    size_t k_trees = 0;
    size_t level_cap = 0;
    size_t leaf_cap = 100;
    uint64_t master_seed = 0;
    double aspect_cap = 1e6;
    double delta = 0.0; // dataset diameter, filled at build
    double b = 0.5;     // filled at build

    void resolve(const PointSet& points) {
        if (!(r > 0.0)) throw std::invalid_argument("BuildParams: r must be positive");
        if (!(eps_exponent > 0.0 && eps_exponent <= 1.0)) {
            throw std::invalid_argument("BuildParams: eps_exponent must be in (0,1]");
        }
        if (d_cal == 0.0) d_cal = calibrated_distortion(points.metric());
        if (c == 0.0) c = 64.0 * d_cal / eps_exponent;
        if (!(c > 6.0)) throw std::invalid_argument("BuildParams: c must exceed 6");
        delta = diameter(points);
        if (delta / r > aspect_cap) {
            throw std::invalid_argument("BuildParams: diameter/r exceeds the aspect-ratio cap");
        }
        double n = static_cast<double>(points.size());
        if (k_trees == 0) k_trees = static_cast<size_t>(std::ceil(3.0 * std::pow(n, eps_exponent)));
        if (level_cap == 0) {
            b = std::max(0.5, 1.0 - c * r / (16.0 * d_cal * std::max(delta, r)));
            level_cap = static_cast<size_t>(std::ceil(std::log(n) / std::log(1.0 / b)));
            level_cap = std::max<size_t>(level_cap, 1);
        }
    }

    void serialize(BinaryWriter& w) const {
        w.f64(r);
        w.f64(eps_exponent);
        w.f64(c);
        w.f64(d_cal);
        w.u64(k_trees);
        w.u64(level_cap);
        w.u64(leaf_cap);
        w.u64(master_seed);
        w.f64(aspect_cap);
        w.f64(delta);
        w.f64(b);
    }

    static BuildParams deserialize(BinaryReader& rd) {
        BuildParams p;
        p.r = rd.f64();
        p.eps_exponent = rd.f64();
        p.c = rd.f64();
        p.d_cal = rd.f64();
        p.k_trees = rd.u64();
        p.level_cap = rd.u64();
        p.leaf_cap = rd.u64();
        p.master_seed = rd.u64();
        p.aspect_cap = rd.f64();
        p.delta = rd.f64();
        p.b = rd.f64();
        return p;
    }
};

struct TreeNode {
    enum class Type : uint8_t { Leaf = 0, Ball = 1, Hash = 2 };

    Type type = Type::Leaf;
    std::vector<uint32_t> points;                 // Leaf
    uint32_t center = 0;                          // Ball
    std::unique_ptr<TreeNode> child;              // Ball
    EmpiricalHashFn hash;                         // Hash
    std::vector<std::pair<uint64_t, std::unique_ptr<TreeNode>>> buckets; // Hash, keys ascending

    const TreeNode* find_bucket(uint64_t key) const {
        auto it = std::lower_bound(buckets.begin(), buckets.end(), key,
                                   [](const auto& entry, uint64_t k) { return entry.first < k; });
        if (it == buckets.end() || it->first != key) return nullptr;
        return it->second.get();
    }
};

struct BuildStats {
    size_t leaf_nodes = 0;
    size_t ball_nodes = 0;
    size_t hash_nodes = 0;
    size_t max_depth = 0;
    uint64_t rejection_attempts = 0; // attempts beyond the first, summed
    double build_seconds = 0.0;      // not serialized

    size_t total_nodes() const { return leaf_nodes + ball_nodes + hash_nodes; }
};

struct QueryResult {
    std::optional<uint32_t> index;
    double distance = 0.0;
    size_t nodes_visited = 0;
};

class Index {
public:
    Index() = default;
    Index(BuildParams params, PointSet data, std::vector<std::unique_ptr<TreeNode>> roots,
          BuildStats stats)
        : params_(std::move(params)), data_(std::move(data)), roots_(std::move(roots)),
          stats_(stats) {}

    const BuildParams& params() const { return params_; }
    const PointSet& dataset() const { return data_; }
    const std::vector<std::unique_ptr<TreeNode>>& roots() const { return roots_; }
    const BuildStats& stats() const { return stats_; }

    double accept_radius() const { return (2.0 * params_.c + 1.0) * params_.r; }

    /// Descends the trees in order; returns the first point found at
    /// distance <= (2c+1)r, if any.
    QueryResult query(std::span<const double> q) const {
        if (q.size() != data_.dim()) throw std::invalid_argument("query: dimension mismatch");
        QueryResult result;
        const double accept = accept_radius();
        for (const auto& root : roots_) {
            const TreeNode* node = root.get();
            while (node != nullptr) {
                ++result.nodes_visited;
                if (node->type == TreeNode::Type::Leaf) {
                    for (uint32_t idx : node->points) {
                        double d = data_.dist_to(idx, q);
                        if (d <= accept) {
                            result.index = idx;
                            result.distance = d;
                            return result;
                        }
                    }
                    node = nullptr;
                } else if (node->type == TreeNode::Type::Ball) {
                    double d = data_.dist_to(node->center, q);
                    if (d <= accept) {
                        result.index = node->center;
                        result.distance = d;
                        return result;
                    }
                    node = node->child.get();
                } else {
                    node = node->find_bucket(node->hash.evaluate(q));
                }
            }
        }
        return result;
    }

    void save(std::ostream& out) const;
    static Index load(std::istream& in);

private:
    BuildParams params_;
    PointSet data_;
    std::vector<std::unique_ptr<TreeNode>> roots_;
    BuildStats stats_;
};

namespace detail {

// Deterministic plan of one node's branch decision. Identical for every
// tree that reaches the same point set, so the root plan is shared.
struct NodePlan {
    std::optional<uint32_t> ball_center;
    std::vector<uint32_t> ball_kept; // parent minus the closed 2cr-ball
    WeakEmbeddingSpec spec;          // hash branch
    std::vector<double> images;      // hash branch, one row per parent point
    size_t image_dim = 0;
    HashCalibration calibration;     // hash branch
};

// First data point (in index order) whose closed 2cr-ball holds a
// strict majority of the node set.
inline std::optional<uint32_t> first_dense_center(const PointSet& data,
                                                  const std::vector<uint32_t>& members,
                                                  double radius) {
    const size_t m = members.size();
    for (uint32_t candidate : members) {
        size_t inside = 0;
        for (size_t j = 0; j < m; ++j) {
            if (data.dist(candidate, members[j]) <= radius) ++inside;
            if (2 * inside > m) return candidate;
            // not enough remaining points to reach a majority
            if (2 * (inside + (m - 1 - j)) <= m) break;
        }
    }
    return std::nullopt;
}

inline NodePlan make_node_plan(const PointSet& data, const std::vector<uint32_t>& members,
                               const BuildParams& params, uint64_t embed_seed, size_t level) {
    NodePlan plan;
    double radius = 2.0 * params.c * params.r;
    plan.ball_center = first_dense_center(data, members, radius);
    if (plan.ball_center) {
        for (uint32_t idx : members) {
            if (data.dist(*plan.ball_center, idx) > radius) plan.ball_kept.push_back(idx);
        }
        return plan;
    }
    std::vector<size_t> wide(members.begin(), members.end());
    PointSet node_set = data.subset(wide);
    try {
        plan.spec = build_weak_embedding(node_set, embed_seed);
        plan.image_dim = plan.spec.target_dim();
        plan.images.reserve(members.size() * plan.image_dim);
        for (size_t i = 0; i < node_set.size(); ++i) {
            auto img = evaluate_weak(plan.spec, node_set.point(i));
            plan.images.insert(plan.images.end(), img.begin(), img.end());
        }
        plan.calibration = calibrate_hash(plan.images, members.size(), plan.image_dim, params.r,
                                          params.d_cal, params.c);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("node level " + std::to_string(level) + ", size " +
                                 std::to_string(members.size()) + ": " + e.what());
    }
    return plan;
}

struct TreeBuilder {
    const PointSet& data;
    const BuildParams& params;
    uint64_t tree_seed;
    BuildStats stats;

    std::unique_ptr<TreeNode> process(const std::vector<uint32_t>& members, size_t level,
                                      uint64_t path, const NodePlan* shared_plan) {
        stats.max_depth = std::max(stats.max_depth, level);
        auto node = std::make_unique<TreeNode>();
        if (level == params.level_cap || members.size() <= params.leaf_cap) {
            node->type = TreeNode::Type::Leaf;
            node->points = members;
            ++stats.leaf_nodes;
            return node;
        }

        NodePlan local;
        const NodePlan* plan = shared_plan;
        if (plan == nullptr) {
            local = make_node_plan(data, members, params, mix_seed(params.master_seed, path),
                                   level);
            plan = &local;
        }

        if (plan->ball_center) {
            node->type = TreeNode::Type::Ball;
            node->center = *plan->ball_center;
            ++stats.ball_nodes;
            node->child = process(plan->ball_kept, level + 1, mix_seed(path, 0xBA11), nullptr);
            return node;
        }

        node->type = TreeNode::Type::Hash;
        try {
            node->hash = sample_calibrated_hash(plan->calibration, plan->images, members.size(),
                                                plan->image_dim, mix_seed(tree_seed, path));
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("node level " + std::to_string(level) + ", size " +
                                     std::to_string(members.size()) + ", path " +
                                     std::to_string(path) + ": " + e.what());
        }
        node->hash.embedding = plan->spec;
        stats.rejection_attempts += node->hash.attempts - 1;
        ++stats.hash_nodes;

        std::map<uint64_t, std::vector<uint32_t>> groups;
        for (size_t i = 0; i < members.size(); ++i) {
            std::span<const double> image(plan->images.data() + i * plan->image_dim,
                                          plan->image_dim);
            groups[node->hash.key_of_image(image)].push_back(members[i]);
        }
        for (auto& [key, bucket_members] : groups) {
            node->buckets.emplace_back(
                key, process(bucket_members, level + 1, mix_seed(path, key + 1), nullptr));
        }
        return node;
    }
};

} // namespace detail

/// Builds the decision-tree forest. Trees are independent given their
/// seeded streams and may be built in parallel; the result is
/// deterministic for a fixed master seed regardless of thread count.
inline Index build_index(const PointSet& points, BuildParams params, size_t threads = 0) {
    auto start = std::chrono::steady_clock::now();
    if (points.size() == 0) throw std::invalid_argument("build_index: empty dataset");
    params.resolve(points);

    std::vector<uint32_t> all(points.size());
    for (size_t i = 0; i < points.size(); ++i) all[i] = static_cast<uint32_t>(i);

    // The branch decision and embedding of the root set are the same
    // deterministic plan for every tree; compute them once.
    const uint64_t root_path = splitmix64(0xADAA);
    detail::NodePlan root_plan;
    bool have_root_plan = false;
    if (points.size() > params.leaf_cap && params.level_cap > 0) {
        root_plan = detail::make_node_plan(points, all, params,
                                           mix_seed(params.master_seed, root_path), 0);
        have_root_plan = true;
    }

    std::vector<std::unique_ptr<TreeNode>> roots(params.k_trees);
    std::vector<BuildStats> tree_stats(params.k_trees);

    if (threads == 0) {
        threads = std::max<size_t>(1, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, params.k_trees);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t t = next.fetch_add(1);
            if (t >= params.k_trees) return;
            detail::TreeBuilder builder{points, params, mix_seed(params.master_seed, t), {}};
            roots[t] = builder.process(all, 0, root_path, have_root_plan ? &root_plan : nullptr);
            tree_stats[t] = builder.stats;
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BuildStats stats;
    for (const auto& s : tree_stats) {
        stats.leaf_nodes += s.leaf_nodes;
        stats.ball_nodes += s.ball_nodes;
        stats.hash_nodes += s.hash_nodes;
        stats.max_depth = std::max(stats.max_depth, s.max_depth);
        stats.rejection_attempts += s.rejection_attempts;
    }
    stats.build_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return Index(std::move(params), points, std::move(roots), stats);
}

// ---- serialization ----

namespace detail {

inline void serialize_node(BinaryWriter& w, const TreeNode& node) {
    w.u8(static_cast<uint8_t>(node.type));
    switch (node.type) {
        case TreeNode::Type::Leaf:
            w.u64(node.points.size());
            for (uint32_t idx : node.points) w.u32(idx);
            break;
        case TreeNode::Type::Ball:
            w.u32(node.center);
            serialize_node(w, *node.child);
            break;
        case TreeNode::Type::Hash:
            node.hash.serialize(w);
            w.u64(node.buckets.size());
            for (const auto& [key, child] : node.buckets) {
                w.u64(key);
                serialize_node(w, *child);
            }
            break;
    }
}

inline std::unique_ptr<TreeNode> deserialize_node(BinaryReader& rd,
                                                  const MetricDescriptor& metric,
                                                  size_t max_index) {
    auto node = std::make_unique<TreeNode>();
    uint8_t type = rd.u8();
    if (type > 2) throw FormatError("index: unknown node type");
    node->type = static_cast<TreeNode::Type>(type);
    switch (node->type) {
        case TreeNode::Type::Leaf: {
            uint64_t count = rd.u64();
            node->points.resize(count);
            for (auto& idx : node->points) {
                idx = rd.u32();
                if (idx >= max_index) throw FormatError("index: point index out of range");
            }
            break;
        }
        case TreeNode::Type::Ball:
            node->center = rd.u32();
            if (node->center >= max_index) throw FormatError("index: center out of range");
            node->child = deserialize_node(rd, metric, max_index);
            break;
        case TreeNode::Type::Hash: {
            node->hash = EmpiricalHashFn::deserialize(rd, metric);
            uint64_t buckets = rd.u64();
            uint64_t previous_key = 0;
            for (uint64_t i = 0; i < buckets; ++i) {
                uint64_t key = rd.u64();
                if (i > 0 && key <= previous_key) throw FormatError("index: bucket keys not ascending");
                previous_key = key;
                node->buckets.emplace_back(key, deserialize_node(rd, metric, max_index));
            }
            break;
        }
    }
    return node;
}

inline size_t count_nodes(const TreeNode& node) {
    switch (node.type) {
        case TreeNode::Type::Leaf: return 1;
        case TreeNode::Type::Ball: return 1 + count_nodes(*node.child);
        case TreeNode::Type::Hash: {
            size_t total = 1;
            for (const auto& [key, child] : node.buckets) total += count_nodes(*child);
            return total;
        }
    }
    return 0;
}

} // namespace detail

inline void Index::save(std::ostream& out) const {
    BinaryWriter w(out);
    w.magic("ADNI");
    w.u16(kIndexFormatVersion);
    params_.serialize(w);
    w.u64(data_.digest());
    data_.write_body(w);
    w.u64(stats_.leaf_nodes);
    w.u64(stats_.ball_nodes);
    w.u64(stats_.hash_nodes);
    w.u64(stats_.max_depth);
    w.u64(stats_.rejection_attempts);
    size_t total = 0;
    for (const auto& root : roots_) total += detail::count_nodes(*root);
    w.u64(total);
    for (const auto& root : roots_) detail::serialize_node(w, *root);
    w.finish_with_checksum();
}

inline Index Index::load(std::istream& in) {
    BinaryReader rd(in);
    rd.expect_magic("ADNI", "index");
    uint16_t version = rd.u16();
    if (version != kIndexFormatVersion) throw FormatError("unsupported index version");
    BuildParams params = BuildParams::deserialize(rd);
    if (params.k_trees == 0 || params.k_trees > 1000000) {
        throw FormatError("index: implausible tree count");
    }
    uint64_t digest = rd.u64();
    PointSet data = PointSet::read_body(rd);
    if (data.digest() != digest) throw FormatError("index: dataset digest mismatch");
    BuildStats stats;
    stats.leaf_nodes = rd.u64();
    stats.ball_nodes = rd.u64();
    stats.hash_nodes = rd.u64();
    stats.max_depth = rd.u64();
    stats.rejection_attempts = rd.u64();
    uint64_t expected_nodes = rd.u64();
    std::vector<std::unique_ptr<TreeNode>> roots(params.k_trees);
    size_t total = 0;
    for (auto& root : roots) {
        root = detail::deserialize_node(rd, data.metric(), data.size());
        total += detail::count_nodes(*root);
    }
    if (total != expected_nodes) throw FormatError("index: node count mismatch");
    rd.verify_checksum();
    return Index(std::move(params), std::move(data), std::move(roots), stats);
}

inline void save_index_file(const Index& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    index.save(out);
}

inline Index load_index_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return Index::load(in);
}

// ---- structural audit ----

struct AuditReport {
    bool ok = true;
    std::vector<std::string> violations;
    size_t nodes_checked = 0;

    void fail(std::string what) {
        ok = false;
        if (violations.size() < 32) violations.push_back(std::move(what));
    }
};

namespace detail {

inline void audit_node(const Index& index, const TreeNode& node,
                       const std::vector<uint32_t>& members, size_t level, AuditReport& report) {
    const auto& params = index.params();
    const PointSet& data = index.dataset();
    ++report.nodes_checked;
    if (level > params.level_cap) {
        report.fail("depth exceeds the level cap");
        return;
    }
    switch (node.type) {
        case TreeNode::Type::Leaf: {
            if (node.points != members) report.fail("leaf set differs from the recomputed set");
            if (level < params.level_cap && members.size() > params.leaf_cap) {
                report.fail("oversized leaf above the level cap");
            }
            break;
        }
        case TreeNode::Type::Ball: {
            double radius = 2.0 * params.c * params.r;
            size_t inside = 0;
            std::vector<uint32_t> kept;
            for (uint32_t idx : members) {
                if (data.dist(node.center, idx) <= radius) {
                    ++inside;
                } else {
                    kept.push_back(idx);
                }
            }
            if (2 * inside <= members.size()) {
                report.fail("ball node without a strict majority inside the 2cr ball");
            }
            auto first = first_dense_center(data, members, radius);
            if (!first || *first != node.center) {
                report.fail("ball center is not the first qualifying point");
            }
            if (2 * kept.size() >= members.size()) {
                report.fail("ball child does not strictly halve the node set");
            }
            if (!node.child) {
                report.fail("ball node without a child");
            } else {
                audit_node(index, *node.child, kept, level + 1, report);
            }
            break;
        }
        case TreeNode::Type::Hash: {
            std::map<uint64_t, std::vector<uint32_t>> groups;
            for (uint32_t idx : members) {
                groups[node.hash.evaluate(data.point(idx))].push_back(idx);
            }
            if (groups.size() != node.buckets.size()) {
                report.fail("hash bucket keys differ from the recomputed partition");
                break;
            }
            size_t child_total = 0;
            auto it = groups.begin();
            for (const auto& [key, child] : node.buckets) {
                if (it == groups.end() || it->first != key) {
                    report.fail("hash bucket key mismatch");
                    return;
                }
                if (static_cast<double>(it->second.size()) > node.hash.load_bound) {
                    report.fail("hash bucket exceeds the certified load bound");
                }
                child_total += it->second.size();
                audit_node(index, *child, it->second, level + 1, report);
                ++it;
            }
            if (child_total != members.size()) {
                report.fail("hash children do not partition the parent set");
            }
            break;
        }
    }
}

} // namespace detail

/// Recomputes every node's point set top-down and checks the partition,
/// ball-halving, load-bound and depth invariants.
inline AuditReport audit_index(const Index& index) {
    AuditReport report;
    std::vector<uint32_t> all(index.dataset().size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<uint32_t>(i);
    for (const auto& root : index.roots()) {
        detail::audit_node(index, *root, all, 0, report);
    }
    return report;
}

} // namespace adnn
