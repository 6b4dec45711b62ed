#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/image.hpp"
#include "supercl/rng.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

struct SlicConfig {
    int k_request = 100;   // desired cluster count
    double compactness = 10.0;
    int iterations = 10;
    std::uint64_t seed = 0;
};

// Per-pixel cluster labels. Labels are contiguous 0..num_clusters-1 and,
// after connectivity enforcement, each label's pixel set is 4-connected.
struct SuperpixelMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;
    int num_clusters = 0;

    SuperpixelMap() = default;
    SuperpixelMap(int h, int w) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, 0) {}

    int label(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    int& label(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return labels.size(); }
};

namespace detail {

inline double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline std::array<double, 3> rgb_to_lab(double r, double g, double b) {
    const double rl = srgb_to_linear(r);
    const double gl = srgb_to_linear(g);
    const double bl = srgb_to_linear(b);
    // sRGB D65
    double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    x /= 0.95047;
    z /= 1.08883;
    auto f = [](double t) {
        return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0;
    };
    const double fx = f(x), fy = f(y), fz = f(z);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

} // namespace detail

// Per-pixel color feature used by the SLIC distance. Grayscale intensity is
// scaled by 100 to match the Lab L range, so the same compactness value
// behaves comparably for both input kinds.
inline std::vector<std::array<double, 3>> slic_pixel_features(const Tensor& img) {
    if (img.rank() == 2) {
        const std::size_t n = img.numel();
        std::vector<std::array<double, 3>> f(n);
        for (std::size_t i = 0; i < n; ++i) f[i] = {100.0 * img[i], 0.0, 0.0};
        return f;
    }
    if (img.rank() == 3 && img.dim(2) == 3) {
        const std::size_t n = img.dim(0) * img.dim(1);
        std::vector<std::array<double, 3>> f(n);
        for (std::size_t i = 0; i < n; ++i)
            f[i] = detail::rgb_to_lab(img[3 * i], img[3 * i + 1], img[3 * i + 2]);
        return f;
    }
    throw ShapeError("slic: image must be [H,W] or [H,W,3]");
}

struct SlicCenter {
    std::array<double, 3> f{0.0, 0.0, 0.0};
    double x = 0.0;
    double y = 0.0;
};

// Regular near-square grid of exactly k_request seeds, each perturbed to the
// lowest-gradient spot in its 3x3 neighborhood. Exposed so independent
// verification can start from identical seeds.
inline std::vector<SlicCenter> slic_initial_centers(const Tensor& img, const SlicConfig& cfg) {
    const auto feat = slic_pixel_features(img);
    const int h = static_cast<int>(img.dim(0));
    const int w = static_cast<int>(img.dim(1));
    const int k = cfg.k_request;
    if (k < 1) throw ContractError("slic: k_request must be >= 1");
    if (static_cast<long long>(h) * w < k)
        throw TooManyClusters("slic: more clusters requested than pixels");

    const int nx = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k) * w / h))));
    const int ny = (k + nx - 1) / nx;

    // gradient magnitude, interior pixels only
    std::vector<double> grad(static_cast<std::size_t>(h) * w, std::numeric_limits<double>::infinity());
    for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            double gx = 0.0, gy = 0.0;
            for (int d = 0; d < 3; ++d) {
                const double dx = feat[y * w + x + 1][d] - feat[y * w + x - 1][d];
                const double dy = feat[(y + 1) * w + x][d] - feat[(y - 1) * w + x][d];
                gx += dx * dx;
                gy += dy * dy;
            }
            grad[static_cast<std::size_t>(y) * w + x] = gx + gy;
        }
    }

    std::vector<SlicCenter> centers(k);
    for (int i = 0; i < k; ++i) {
        const int row = i / nx;
        const int col = i % nx;
        const int row_count = std::min(nx, k - row * nx);
        int cy = static_cast<int>((row + 0.5) * h / ny);
        int cx = static_cast<int>((col + 0.5) * w / row_count);
        cy = std::clamp(cy, 0, h - 1);
        cx = std::clamp(cx, 0, w - 1);

        int bx = cx, by = cy;
        double best = grad[static_cast<std::size_t>(cy) * w + cx];
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx2 = cx + dx, ny2 = cy + dy;
                if (nx2 < 0 || nx2 >= w || ny2 < 0 || ny2 >= h) continue;
                const double g = grad[static_cast<std::size_t>(ny2) * w + nx2];
                if (g < best) {
                    best = g;
                    bx = nx2;
                    by = ny2;
                }
            }
        }
        centers[i].f = feat[static_cast<std::size_t>(by) * w + bx];
        centers[i].x = bx;
        centers[i].y = by;
    }
    return centers;
}

// Merges every 4-connected fragment smaller than a quarter of the mean
// cluster area into its largest adjacent component, then compacts labels in
// raster order of first appearance.
inline SuperpixelMap enforce_connectivity(const SuperpixelMap& raw) {
    const int h = raw.height, w = raw.width;
    const std::size_t n = raw.size();

    int max_label = -1;
    for (int l : raw.labels) max_label = std::max(max_label, l);
    std::vector<char> present(static_cast<std::size_t>(max_label) + 1, 0);
    for (int l : raw.labels) present[l] = 1;
    int k_present = 0;
    for (char p : present) k_present += p;
    const double threshold = (static_cast<double>(n) / k_present) / 4.0;

    // split into 4-connected components, raster discovery order
    std::vector<int> comp(n, -1);
    std::vector<std::vector<int>> comp_pixels;
    const int dx4[4] = {1, -1, 0, 0};
    const int dy4[4] = {0, 0, 1, -1};
    for (std::size_t start = 0; start < n; ++start) {
        if (comp[start] != -1) continue;
        const int id = static_cast<int>(comp_pixels.size());
        comp_pixels.emplace_back();
        std::vector<int> stack{static_cast<int>(start)};
        comp[start] = id;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            comp_pixels[id].push_back(p);
            const int py = p / w, px = p % w;
            for (int d = 0; d < 4; ++d) {
                const int qx = px + dx4[d], qy = py + dy4[d];
                if (qx < 0 || qx >= w || qy < 0 || qy >= h) continue;
                const int q = qy * w + qx;
                if (comp[q] == -1 && raw.labels[q] == raw.labels[p]) {
                    comp[q] = id;
                    stack.push_back(q);
                }
            }
        }
    }

    std::vector<std::size_t> comp_size(comp_pixels.size());
    std::vector<char> alive(comp_pixels.size(), 1);
    for (std::size_t i = 0; i < comp_pixels.size(); ++i) comp_size[i] = comp_pixels[i].size();

    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t a = 0; a < comp_pixels.size(); ++a) {
            if (!alive[a] || static_cast<double>(comp_size[a]) >= threshold) continue;
            // largest adjacent component; ties to the smaller id
            int best = -1;
            std::size_t best_size = 0;
            for (int p : comp_pixels[a]) {
                const int py = p / w, px = p % w;
                for (int d = 0; d < 4; ++d) {
                    const int qx = px + dx4[d], qy = py + dy4[d];
                    if (qx < 0 || qx >= w || qy < 0 || qy >= h) continue;
                    const int cb = comp[qy * w + qx];
                    if (cb == static_cast<int>(a)) continue;
                    if (comp_size[cb] > best_size ||
                        (comp_size[cb] == best_size && (best == -1 || cb < best))) {
                        best = cb;
                        best_size = comp_size[cb];
                    }
                }
            }
            if (best == -1) continue; // isolated (single-component map)
            for (int p : comp_pixels[a]) comp[p] = best;
            auto& dst = comp_pixels[best];
            dst.insert(dst.end(), comp_pixels[a].begin(), comp_pixels[a].end());
            comp_size[best] += comp_size[a];
            comp_pixels[a].clear();
            comp_size[a] = 0;
            alive[a] = 0;
            merged = true;
        }
    }

    SuperpixelMap out(h, w);
    std::vector<int> relabel(comp_pixels.size(), -1);
    int next = 0;
    for (std::size_t p = 0; p < n; ++p) {
        int& r = relabel[comp[p]];
        if (r == -1) r = next++;
        out.labels[p] = r;
    }
    out.num_clusters = next;
    return out;
}

// Standard SLIC: seeds on a regular grid, windowed k-means iterations with
// distance D = sqrt(dc^2 + (ds/S0)^2 m^2), then connectivity enforcement.
inline SuperpixelMap slic_segment(const Tensor& img, const SlicConfig& cfg) {
    const auto feat = slic_pixel_features(img);
    const int h = static_cast<int>(img.dim(0));
    const int w = static_cast<int>(img.dim(1));
    if (cfg.iterations < 1) throw ContractError("slic: iterations must be >= 1");
    if (!(cfg.compactness > 0.0)) throw ContractError("slic: compactness must be > 0");

    auto centers = slic_initial_centers(img, cfg);
    const int k = static_cast<int>(centers.size());
    const double s0 = std::sqrt(static_cast<double>(h) * w / k);
    const double spatial_w = (cfg.compactness / s0) * (cfg.compactness / s0);
    const std::size_t n = static_cast<std::size_t>(h) * w;

    std::vector<int> labels(n, -1);
    std::vector<double> dist(n);

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        for (int kc = 0; kc < k; ++kc) {
            const auto& ctr = centers[kc];
            const int y0 = std::max(0, static_cast<int>(std::floor(ctr.y - s0)));
            const int y1 = std::min(h - 1, static_cast<int>(std::ceil(ctr.y + s0)));
            const int x0 = std::max(0, static_cast<int>(std::floor(ctr.x - s0)));
            const int x1 = std::min(w - 1, static_cast<int>(std::ceil(ctr.x + s0)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    const auto& fp = feat[p];
                    const double d0 = fp[0] - ctr.f[0];
                    const double d1 = fp[1] - ctr.f[1];
                    const double d2 = fp[2] - ctr.f[2];
                    const double dxp = x - ctr.x;
                    const double dyp = y - ctr.y;
                    const double d = d0 * d0 + d1 * d1 + d2 * d2 + spatial_w * (dxp * dxp + dyp * dyp);
                    if (d < dist[p]) {
                        dist[p] = d;
                        labels[p] = kc;
                    }
                }
            }
        }

        // a pixel outside every window keeps no assignment; resolve by full scan
        for (std::size_t p = 0; p < n; ++p) {
            if (labels[p] != -1) continue;
            const int y = static_cast<int>(p) / w, x = static_cast<int>(p) % w;
            double best = std::numeric_limits<double>::infinity();
            for (int kc = 0; kc < k; ++kc) {
                const auto& ctr = centers[kc];
                const double d0 = feat[p][0] - ctr.f[0];
                const double d1 = feat[p][1] - ctr.f[1];
                const double d2 = feat[p][2] - ctr.f[2];
                const double dxp = x - ctr.x;
                const double dyp = y - ctr.y;
                const double d = d0 * d0 + d1 * d1 + d2 * d2 + spatial_w * (dxp * dxp + dyp * dyp);
                if (d < best) {
                    best = d;
                    labels[p] = kc;
                }
            }
        }

        std::vector<SlicCenter> acc(k);
        std::vector<std::size_t> cnt(k, 0);
        for (std::size_t p = 0; p < n; ++p) {
            const int kc = labels[p];
            acc[kc].f[0] += feat[p][0];
            acc[kc].f[1] += feat[p][1];
            acc[kc].f[2] += feat[p][2];
            acc[kc].x += static_cast<double>(p % w);
            acc[kc].y += static_cast<double>(p / w);
            ++cnt[kc];
        }
        for (int kc = 0; kc < k; ++kc) {
            if (cnt[kc] == 0) continue; // keep previous position
            const double inv = 1.0 / static_cast<double>(cnt[kc]);
            centers[kc].f = {acc[kc].f[0] * inv, acc[kc].f[1] * inv, acc[kc].f[2] * inv};
            centers[kc].x = acc[kc].x * inv;
            centers[kc].y = acc[kc].y * inv;
        }
    }

    SuperpixelMap raw(h, w);
    raw.labels = std::move(labels);
    int mx = 0;
    for (int l : raw.labels) mx = std::max(mx, l);
    raw.num_clusters = mx + 1;
    return enforce_connectivity(raw);
}

// Majority label per target block; ties go to the smaller label value.
// Output labels are compacted preserving ascending label order.
inline SuperpixelMap downsample_map(const SuperpixelMap& map, int target_h, int target_w) {
    if (target_h > map.height || target_w > map.width)
        throw BadTarget("downsample_map: target exceeds source size");
    if (target_h < 1 || target_w < 1)
        throw BadTarget("downsample_map: target must be positive");

    SuperpixelMap out(target_h, target_w);
    std::vector<int> votes(static_cast<std::size_t>(map.num_clusters > 0 ? map.num_clusters : 1), 0);
    int max_label = 0;
    for (int l : map.labels) max_label = std::max(max_label, l);
    votes.assign(static_cast<std::size_t>(max_label) + 1, 0);

    for (int r = 0; r < target_h; ++r) {
        const int ys = static_cast<int>(static_cast<long long>(r) * map.height / target_h);
        const int ye = static_cast<int>(static_cast<long long>(r + 1) * map.height / target_h);
        for (int c = 0; c < target_w; ++c) {
            const int xs = static_cast<int>(static_cast<long long>(c) * map.width / target_w);
            const int xe = static_cast<int>(static_cast<long long>(c + 1) * map.width / target_w);
            std::fill(votes.begin(), votes.end(), 0);
            for (int y = ys; y < ye; ++y)
                for (int x = xs; x < xe; ++x)
                    ++votes[map.label(y, x)];
            int best = 0;
            for (std::size_t l = 1; l < votes.size(); ++l)
                if (votes[l] > votes[best]) best = static_cast<int>(l);
            out.label(r, c) = best;
        }
    }

    std::vector<int> relabel(votes.size(), -1);
    int next = 0;
    for (std::size_t l = 0; l < votes.size(); ++l) {
        for (int v : out.labels) {
            if (v == static_cast<int>(l)) {
                relabel[l] = next++;
                break;
            }
        }
    }
    for (int& v : out.labels) v = relabel[v];
    out.num_clusters = next;
    return out;
}

// Indicator masks M_c, mutually exclusive and collectively exhaustive.
inline std::vector<Tensor> cluster_masks(const SuperpixelMap& map) {
    std::vector<Tensor> masks;
    masks.reserve(map.num_clusters);
    for (int c = 0; c < map.num_clusters; ++c)
        masks.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(map.height),
                                                    static_cast<std::size_t>(map.width)});
    for (std::size_t p = 0; p < map.size(); ++p)
        masks[map.labels[p]][p] = 1.0;
    return masks;
}

// Label maps travel through NPY files as doubles; reject anything that is
// not a nonnegative integer grid.
inline SuperpixelMap map_from_label_tensor(const Tensor& t) {
    if (t.rank() != 2) throw FormatError("label map: expected a 2-d tensor");
    SuperpixelMap map(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
    int mx = 0;
    for (std::size_t p = 0; p < t.numel(); ++p) {
        const double v = t[p];
        if (!(v >= 0.0) || v != std::floor(v) || v > 1e9)
            throw FormatError("label map: values must be nonnegative integers");
        map.labels[p] = static_cast<int>(v);
        mx = std::max(mx, map.labels[p]);
    }
    map.num_clusters = mx + 1;
    return map;
}

inline std::vector<SuperpixelMap> maps_from_label_tensor(const Tensor& t) {
    if (t.rank() != 3) throw FormatError("label maps: expected a B x h x w tensor");
    const std::size_t b = t.dim(0), h = t.dim(1), w = t.dim(2);
    std::vector<SuperpixelMap> maps;
    maps.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        Tensor one({h, w});
        std::copy(t.ptr() + i * h * w, t.ptr() + (i + 1) * h * w, one.ptr());
        maps.push_back(map_from_label_tensor(one));
    }
    return maps;
}

inline Tensor map_to_label_tensor(const SuperpixelMap& map) {
    Tensor t({static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width)});
    for (std::size_t p = 0; p < map.size(); ++p) t[p] = static_cast<double>(map.labels[p]);
    return t;
}

namespace detail {

inline std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = v - c;
    auto to8 = [&](double t) { return static_cast<std::uint8_t>(std::lround((t + m) * 255.0)); };
    return {to8(r), to8(g), to8(b)};
}

} // namespace detail

// Deterministic label coloring: a seeded golden-ratio hue walk keeps nearby
// labels far apart on the hue circle.
inline ImageU8 colorize_map(const SuperpixelMap& map, std::uint64_t seed) {
    Rng rng(seed);
    const double h0 = rng.uniform();
    std::vector<std::array<std::uint8_t, 3>> palette(map.num_clusters);
    for (int c = 0; c < map.num_clusters; ++c) {
        const double hue = std::fmod(h0 + c * 0.61803398874989484820, 1.0);
        palette[c] = detail::hsv_to_rgb(hue, 0.65, 0.95);
    }
    ImageU8 img(map.height, map.width, 3);
    for (std::size_t p = 0; p < map.size(); ++p) {
        const auto& col = palette[map.labels[p]];
        img.pixels[3 * p] = col[0];
        img.pixels[3 * p + 1] = col[1];
        img.pixels[3 * p + 2] = col[2];
    }
    return img;
}

} // namespace supercl
