#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/infonce.hpp"
#include "supercl/positive_set.hpp"
#include "supercl/superpixel.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

// Union-find with path compression and union by rank; drives the
// Hoshen-Kopelman style component labeling over the top-1 graph.
struct DisjointSet {
    std::vector<int> parent;
    std::vector<int> rank;

    explicit DisjointSet(std::size_t n) : parent(n), rank(n, 0) {
        for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
    }

    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank[a] < rank[b]) std::swap(a, b);
        parent[b] = a;
        if (rank[a] == rank[b]) ++rank[a];
    }
};

// Mean across the channel axis: B x C x h x w -> B x h x w.
inline Tensor channel_mean(const Tensor& y) {
    if (y.rank() != 4) throw ShapeError("channel_mean: expected B x C x h x w");
    const std::size_t b = y.dim(0), c = y.dim(1), h = y.dim(2), w = y.dim(3);
    if (c < 1) throw ShapeError("channel_mean: need at least one channel");
    Tensor out({b, h, w});
    const std::size_t plane = h * w;
    const double inv = 1.0 / static_cast<double>(c);
    for (std::size_t bi = 0; bi < b; ++bi) {
        const double* src = y.ptr() + bi * c * plane;
        double* dst = out.ptr() + bi * plane;
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t p = 0; p < plane; ++p)
                dst[p] += src[ci * plane + p];
        for (std::size_t p = 0; p < plane; ++p) dst[p] *= inv;
    }
    return out;
}

// Averaged-superpixel feature: per sample and cluster, the masked mean of
// the channel-averaged map (normalized by h*w), broadcast back over the
// cluster's region. region_normalize divides by the cluster area instead.
inline Tensor asp_feature(const Tensor& y_m, const std::vector<SuperpixelMap>& maps,
                          bool region_normalize = false) {
    if (y_m.rank() != 3) throw ShapeError("asp_feature: expected B x h x w");
    const std::size_t b = y_m.dim(0), h = y_m.dim(1), w = y_m.dim(2);
    if (maps.size() != b) throw ShapeError("asp_feature: one superpixel map per sample required");
    Tensor out({b, h, w});
    const std::size_t plane = h * w;
    for (std::size_t bi = 0; bi < b; ++bi) {
        const SuperpixelMap& map = maps[bi];
        if (map.height != static_cast<int>(h) || map.width != static_cast<int>(w))
            throw ShapeError("asp_feature: map size does not match feature map");
        const int k = map.num_clusters;
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> area(k, 0);
        const double* src = y_m.ptr() + bi * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            sum[map.labels[p]] += src[p];
            ++area[map.labels[p]];
        }
        std::vector<double> value(k);
        for (int c = 0; c < k; ++c) {
            const double denom = region_normalize ? static_cast<double>(area[c])
                                                  : static_cast<double>(plane);
            value[c] = sum[c] / denom;
        }
        double* dst = out.ptr() + bi * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = value[map.labels[p]];
    }
    return out;
}

// Pairwise cosine similarities of the flattened per-sample maps. The
// diagonal is undefined and stored as -inf so argmax scans skip it.
inline Tensor affinity_matrix(const Tensor& p) {
    if (p.rank() != 3) throw ShapeError("affinity_matrix: expected B x h x w");
    const std::size_t b = p.dim(0);
    if (b < 2) throw ShapeError("affinity_matrix: need B >= 2");
    const std::size_t plane = p.dim(1) * p.dim(2);
    Tensor c({b, b});
    for (std::size_t i = 0; i < b; ++i) c.at(i, i) = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < b; ++i) {
        const std::span<const double> pi(p.ptr() + i * plane, plane);
        for (std::size_t j = i + 1; j < b; ++j) {
            const std::span<const double> pj(p.ptr() + j * plane, plane);
            const double s = cosine_similarity(pi, pj);
            c.at(i, j) = s;
            c.at(j, i) = s;
        }
    }
    return c;
}

// Symmetric top-1 graph: an edge {i, j} exists when j is i's most similar
// sample or i is j's. Argmax ties break toward the smaller index.
inline Tensor top1_adjacency(const Tensor& c) {
    if (c.rank() != 2 || c.dim(0) != c.dim(1)) throw ShapeError("top1_adjacency: expected B x B");
    const std::size_t b = c.dim(0);
    if (b < 2) throw ShapeError("top1_adjacency: need B >= 2");
    Tensor a({b, b});
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t best = i == 0 ? 1 : 0;
        for (std::size_t k = 0; k < b; ++k) {
            if (k == i) continue;
            if (c.at(i, k) > c.at(i, best)) best = k;
        }
        a.at(i, best) = 1.0;
        a.at(best, i) = 1.0;
    }
    return a;
}

// Weak label: W[i][j] = 1 iff i != j and both fall in the same connected
// component of the top-1 graph.
inline Tensor connected_components_weak_label(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw ShapeError("connected_components_weak_label: expected B x B");
    const std::size_t b = a.dim(0);
    DisjointSet ds(b);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j)
            if (a.at(i, j) != 0.0) ds.unite(static_cast<int>(i), static_cast<int>(j));
    Tensor w({b, b});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j)
            if (i != j && ds.find(static_cast<int>(i)) == ds.find(static_cast<int>(j)))
                w.at(i, j) = 1.0;
    return w;
}

// Lift of the B x B weak label to the 2B concatenated views: the two
// augmentations of one image are always positive, plus every W link.
inline PositiveSet extend_weak_label(const Tensor& w) {
    return lift_base_relation(w);
}

// Component listing, one line per component: sorted member indices.
inline std::string weak_label_components_text(const Tensor& w) {
    const std::size_t b = w.dim(0);
    std::vector<char> seen(b, 0);
    std::string out;
    for (std::size_t i = 0; i < b; ++i) {
        if (seen[i]) continue;
        std::string line = std::to_string(i);
        seen[i] = 1;
        for (std::size_t j = i + 1; j < b; ++j) {
            if (!seen[j] && w.at(i, j) != 0.0) {
                line += ' ';
                line += std::to_string(j);
                seen[j] = 1;
            }
        }
        out += line;
        out += '\n';
    }
    return out;
}

// Instance-level supervised InfoNCE (the inter-image term).
inline InfoNceResult loss_inter(const Tensor& instance_projections, const PositiveSet& omega_w, double tau) {
    return supervised_infonce(instance_projections, omega_w, tau);
}

} // namespace supercl
