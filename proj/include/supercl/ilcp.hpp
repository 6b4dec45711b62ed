#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/infonce.hpp"
#include "supercl/positive_set.hpp"

namespace supercl {

// Keeps the label at every (stride*r, stride*c) grid position of an h x w
// label field, reducing the number of pixel-level contrastive pairs.
inline std::vector<int> resample_pixels(const std::vector<int>& map_flat, int h, int w, int stride) {
    if (static_cast<std::size_t>(h) * w != map_flat.size())
        throw LengthMismatch("resample_pixels: h*w != label count");
    const bool pow2 = stride >= 1 && stride <= 64 && (stride & (stride - 1)) == 0;
    if (!pow2 || h % stride != 0 || w % stride != 0)
        throw BadStride("resample_pixels: stride must be in {1,2,4,8,16,32,64} and divide h and w");
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(h / stride) * (w / stride));
    for (int r = 0; r < h; r += stride)
        for (int c = 0; c < w; c += stride)
            out.push_back(map_flat[static_cast<std::size_t>(r) * w + c]);
    return out;
}

// Intra-image positive set over the joint anchor list (view-1 pixels first,
// then view-2): two anchors pair up when their superpixel labels agree.
// cross_view_only restricts positives to pairs from opposite views.
inline PositiveSet build_ilcp_positive_set(const std::vector<int>& labels_view1,
                                           const std::vector<int>& labels_view2,
                                           bool cross_view_only = false) {
    if (labels_view1.size() != labels_view2.size())
        throw LengthMismatch("build_ilcp_positive_set: views of different length");
    const std::size_t n_pix = labels_view1.size();
    const std::size_t n = 2 * n_pix;

    auto label_of = [&](std::size_t a) {
        return a < n_pix ? labels_view1[a] : labels_view2[a - n_pix];
    };

    // bucket anchors by label, ascending anchor index inside each bucket
    std::unordered_map<int, std::vector<std::uint32_t>> buckets;
    for (std::size_t a = 0; a < n; ++a)
        buckets[label_of(a)].push_back(static_cast<std::uint32_t>(a));

    PositiveSet omega(n);
    for (std::size_t a = 0; a < n; ++a) {
        const auto& members = buckets[label_of(a)];
        auto& pos = omega.positives[a];
        pos.reserve(members.size() - 1);
        for (std::uint32_t m : members) {
            if (m == a) continue;
            if (cross_view_only && (m < n_pix) == (a < n_pix)) continue;
            pos.push_back(m);
        }
    }
    return omega;
}

// Pixel-level supervised InfoNCE (the intra-image term).
inline InfoNceResult loss_intra(const Tensor& pixel_projections, const PositiveSet& omega, double tau) {
    return supervised_infonce(pixel_projections, omega, tau);
}

} // namespace supercl
