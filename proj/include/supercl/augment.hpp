#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/rng.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

struct NonSpatialParams {
    double brightness_delta = 0.0; // [-0.2, 0.2]
    double contrast_factor = 1.0;  // [0.8, 1.2]
    double blur_sigma = 0.0;       // [0, 1.5]
};

struct SpatialParams {
    double translate_x = 0.0; // fraction of width, [-0.1, 0.1]
    double translate_y = 0.0; // fraction of height, [-0.1, 0.1]
    double rotate_deg = 0.0;  // [-15, 15]
    double scale = 1.0;       // [0.9, 1.1]
};

// The sampling ranges are fixed choices; the standard augmentation lists
// name the operations but not their magnitudes.
inline NonSpatialParams sample_nonspatial(Rng& rng) {
    NonSpatialParams p;
    p.brightness_delta = rng.uniform(-0.2, 0.2);
    p.contrast_factor = rng.uniform(0.8, 1.2);
    p.blur_sigma = rng.uniform(0.0, 1.5);
    return p;
}

inline SpatialParams sample_spatial(Rng& rng) {
    SpatialParams p;
    p.translate_x = rng.uniform(-0.1, 0.1);
    p.translate_y = rng.uniform(-0.1, 0.1);
    p.rotate_deg = rng.uniform(-15.0, 15.0);
    p.scale = rng.uniform(0.9, 1.1);
    return p;
}

namespace detail {

// Normalized Gaussian kernel, radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[i + radius] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

} // namespace detail

// Brightness/contrast about mid-gray with clamping, then a separable
// Gaussian blur with replicated borders. Pixel grid is unchanged, so the
// output stays aligned with the source geometry.
inline Tensor augment_nonspatial(const Tensor& img, const NonSpatialParams& p) {
    if (img.rank() != 2) throw ShapeError("augment_nonspatial: expected [H,W] image");
    const int h = static_cast<int>(img.dim(0));
    const int w = static_cast<int>(img.dim(1));

    Tensor out({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (std::size_t i = 0; i < img.numel(); ++i) {
        const double v = p.contrast_factor * (img[i] - 0.5) + 0.5 + p.brightness_delta;
        out[i] = std::clamp(v, 0.0, 1.0);
    }
    if (p.blur_sigma <= 0.0) return out;

    const auto kernel = detail::gaussian_kernel(p.blur_sigma);
    const int radius = static_cast<int>(kernel.size() / 2);

    Tensor tmp({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                const int xs = std::clamp(x + t, 0, w - 1);
                acc += kernel[t + radius] * out.at(y, xs);
            }
            tmp.at(y, x) = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                const int ys = std::clamp(y + t, 0, h - 1);
                acc += kernel[t + radius] * tmp.at(ys, x);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

// Affine warp: rotate about the image center (positive angle turns the
// +x axis toward +y), scale, then translate; bilinear sampling with zero
// padding outside the source.
inline Tensor augment_spatial(const Tensor& img, const SpatialParams& p) {
    if (img.rank() != 2) throw ShapeError("augment_spatial: expected [H,W] image");
    const int h = static_cast<int>(img.dim(0));
    const int w = static_cast<int>(img.dim(1));
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    const double theta = p.rotate_deg * 3.14159265358979323846 / 180.0;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double tx = p.translate_x * w;
    const double ty = p.translate_y * h;
    const double inv_s = 1.0 / p.scale;

    Tensor out({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // inverse map into the source image
            const double dx = (x - cx - tx) * inv_s;
            const double dy = (y - cy - ty) * inv_s;
            const double sx = cos_t * dx + sin_t * dy + cx;
            const double sy = -sin_t * dx + cos_t * dy + cy;

            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;

            auto tap = [&](int yy, int xx) -> double {
                if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
                return img.at(yy, xx);
            };
            out.at(y, x) = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                           fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
        }
    }
    return out;
}

} // namespace supercl
