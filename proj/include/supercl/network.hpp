#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/rng.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

// Encoder: n_blocks of (3x3 conv, leaky relu, 3x3 conv, leaky relu, 2x2
// maxpool). Projector: global average pool, affine, relu, affine. No
// normalization layers, so the backward pass stays exact and deterministic.

constexpr double kLeakySlope = 0.01;

struct ConvLayer {
    Tensor w; // [oc, ic, 3, 3]
    Tensor b; // [oc]
};

struct ConvBlock {
    ConvLayer c1, c2;
};

struct Affine {
    Tensor w; // [out, in]
    Tensor b; // [out]
};

struct EncoderParams {
    std::vector<ConvBlock> blocks;

    int out_channels() const {
        return blocks.empty() ? 0 : static_cast<int>(blocks.back().c2.w.dim(0));
    }
};

struct ProjectorParams {
    Affine fc1, fc2;

    int out_dim() const { return static_cast<int>(fc2.w.dim(0)); }
};

namespace detail {

inline Tensor kaiming_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.uniform(-limit, limit);
    return t;
}

// Nonzero bias keeps flat input patches from collapsing to exactly-zero
// feature vectors, which the cosine-based losses reject.
inline Tensor bias_uniform(std::size_t n, std::size_t fan_in, Rng& rng) {
    Tensor t({n});
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.uniform(-limit, limit);
    return t;
}

} // namespace detail

// Channel plan: 1 -> c_final/2^(n-1) -> ... -> c_final, doubling per block.
inline EncoderParams init_encoder(int n_blocks, int c_final, Rng& rng) {
    if (n_blocks < 1 || c_final < (1 << (n_blocks - 1)))
        throw ContractError("init_encoder: bad block/channel combination");
    EncoderParams p;
    int ic = 1;
    for (int i = 0; i < n_blocks; ++i) {
        const int oc = c_final >> (n_blocks - 1 - i);
        ConvBlock blk;
        blk.c1.w = detail::kaiming_uniform({static_cast<std::size_t>(oc), static_cast<std::size_t>(ic), 3, 3},
                                           static_cast<std::size_t>(ic) * 9, rng);
        blk.c1.b = detail::bias_uniform(static_cast<std::size_t>(oc), static_cast<std::size_t>(ic) * 9, rng);
        blk.c2.w = detail::kaiming_uniform({static_cast<std::size_t>(oc), static_cast<std::size_t>(oc), 3, 3},
                                           static_cast<std::size_t>(oc) * 9, rng);
        blk.c2.b = detail::bias_uniform(static_cast<std::size_t>(oc), static_cast<std::size_t>(oc) * 9, rng);
        p.blocks.push_back(std::move(blk));
        ic = oc;
    }
    return p;
}

inline ProjectorParams init_projector(int c_in, int hidden, int d_proj, Rng& rng) {
    ProjectorParams p;
    p.fc1.w = detail::kaiming_uniform({static_cast<std::size_t>(hidden), static_cast<std::size_t>(c_in)},
                                      static_cast<std::size_t>(c_in), rng);
    p.fc1.b = detail::bias_uniform(static_cast<std::size_t>(hidden), static_cast<std::size_t>(c_in), rng);
    p.fc2.w = detail::kaiming_uniform({static_cast<std::size_t>(d_proj), static_cast<std::size_t>(hidden)},
                                      static_cast<std::size_t>(hidden), rng);
    p.fc2.b = detail::bias_uniform(static_cast<std::size_t>(d_proj), static_cast<std::size_t>(hidden), rng);
    return p;
}

namespace detail {

// A plane copied into a zero-padded (H+2) x (W+2) buffer; the 3x3 kernels
// then run branch-free over full rows.
struct PaddedPlane {
    std::vector<double> buf;
    std::size_t w = 0;

    void load(const double* src, std::size_t h, std::size_t w_) {
        w = w_;
        buf.assign((h + 2) * (w_ + 2), 0.0);
        for (std::size_t y = 0; y < h; ++y)
            std::copy(src + y * w_, src + (y + 1) * w_, buf.data() + (y + 1) * (w_ + 2) + 1);
    }

    const double* row(std::size_t y) const { return buf.data() + y * (w + 2); }
};

// dst[x] += 9-tap stencil over three padded rows
inline void stencil_accumulate(double* dst, const double* r0, const double* r1, const double* r2,
                               const double* wk, std::size_t w) {
    const double w0 = wk[0], w1 = wk[1], w2 = wk[2];
    const double w3 = wk[3], w4 = wk[4], w5 = wk[5];
    const double w6 = wk[6], w7 = wk[7], w8 = wk[8];
    for (std::size_t x = 0; x < w; ++x) {
        dst[x] += w0 * r0[x] + w1 * r0[x + 1] + w2 * r0[x + 2] +
                  w3 * r1[x] + w4 * r1[x + 1] + w5 * r1[x + 2] +
                  w6 * r2[x] + w7 * r2[x + 1] + w8 * r2[x + 2];
    }
}

// 3x3 convolution, stride 1, zero padding 1.
inline void conv3x3_forward(const Tensor& in, const ConvLayer& layer, Tensor& out) {
    const std::size_t B = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t OC = layer.w.dim(0);
    const std::size_t plane = H * W;
    PaddedPlane pad;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < OC; ++oc) {
            double* dst = out.ptr() + (b * OC + oc) * plane;
            const double bias = layer.b[oc];
            for (std::size_t p = 0; p < plane; ++p) dst[p] = bias;
        }
        for (std::size_t ic = 0; ic < IC; ++ic) {
            pad.load(in.ptr() + (b * IC + ic) * plane, H, W);
            for (std::size_t oc = 0; oc < OC; ++oc) {
                double* dst = out.ptr() + (b * OC + oc) * plane;
                const double* wk = layer.w.ptr() + (oc * IC + ic) * 9;
                for (std::size_t y = 0; y < H; ++y)
                    stencil_accumulate(dst + y * W, pad.row(y), pad.row(y + 1), pad.row(y + 2), wk, W);
            }
        }
    }
}

inline void conv3x3_backward(const Tensor& in, const ConvLayer& layer, const Tensor& d_out,
                             ConvLayer& d_layer, Tensor* d_in) {
    const std::size_t B = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t OC = layer.w.dim(0);
    const std::size_t plane = H * W;
    PaddedPlane pad;

    // bias and weight gradients: correlate the input with the output gradient
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < OC; ++oc) {
            const double* g = d_out.ptr() + (b * OC + oc) * plane;
            double gb = 0.0;
            for (std::size_t p = 0; p < plane; ++p) gb += g[p];
            d_layer.b[oc] += gb;
        }
        for (std::size_t ic = 0; ic < IC; ++ic) {
            pad.load(in.ptr() + (b * IC + ic) * plane, H, W);
            for (std::size_t oc = 0; oc < OC; ++oc) {
                const double* g = d_out.ptr() + (b * OC + oc) * plane;
                double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
                for (std::size_t y = 0; y < H; ++y) {
                    const double* gr = g + y * W;
                    for (int k = 0; k < 9; ++k) {
                        const double* r = pad.row(y + k / 3) + k % 3;
                        double a = 0.0;
#pragma omp simd reduction(+ : a)
                        for (std::size_t x = 0; x < W; ++x) a += r[x] * gr[x];
                        acc[k] += a;
                    }
                }
                double* gw = d_layer.w.ptr() + (oc * IC + ic) * 9;
                for (int k = 0; k < 9; ++k) gw[k] += acc[k];
            }
        }
    }

    // input gradient: full correlation of the output gradient with the
    // 180-degree rotated kernel
    if (!d_in) return;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < OC; ++oc) {
            pad.load(d_out.ptr() + (b * OC + oc) * plane, H, W);
            for (std::size_t ic = 0; ic < IC; ++ic) {
                const double* wk = layer.w.ptr() + (oc * IC + ic) * 9;
                const double flipped[9] = {wk[8], wk[7], wk[6], wk[5], wk[4],
                                           wk[3], wk[2], wk[1], wk[0]};
                double* gsrc = d_in->ptr() + (b * IC + ic) * plane;
                for (std::size_t y = 0; y < H; ++y)
                    stencil_accumulate(gsrc + y * W, pad.row(y), pad.row(y + 1), pad.row(y + 2),
                                       flipped, W);
            }
        }
    }
}

inline void leaky_relu_forward(const Tensor& pre, Tensor& act) {
    const double* s = pre.ptr();
    double* d = act.ptr();
    for (std::size_t i = 0; i < pre.numel(); ++i) d[i] = s[i] > 0.0 ? s[i] : kLeakySlope * s[i];
}

inline void leaky_relu_backward(const Tensor& pre, Tensor& grad) {
    const double* s = pre.ptr();
    double* g = grad.ptr();
    for (std::size_t i = 0; i < pre.numel(); ++i)
        if (!(s[i] > 0.0)) g[i] *= kLeakySlope;
}

} // namespace detail

struct BlockCache {
    Tensor in;    // block input
    Tensor pre1;  // conv1 output before activation
    Tensor act1;  // conv2 input
    Tensor pre2;  // conv2 output before activation
    std::vector<std::uint32_t> pool_argmax; // flat index into act2 per pooled value
    std::vector<std::size_t> out_shape;
};

struct EncoderCache {
    std::vector<BlockCache> blocks;
    std::vector<std::size_t> param_sig; // weight dims, guards against stale reuse
};

namespace detail {

inline std::vector<std::size_t> encoder_signature(const EncoderParams& p) {
    std::vector<std::size_t> sig;
    for (const auto& blk : p.blocks) {
        for (std::size_t d : blk.c1.w.shape()) sig.push_back(d);
        for (std::size_t d : blk.c2.w.shape()) sig.push_back(d);
    }
    return sig;
}

} // namespace detail

inline Tensor encoder_forward(const EncoderParams& p, const Tensor& batch, EncoderCache* cache) {
    if (batch.rank() != 4 || batch.dim(1) != 1)
        throw ShapeError("encoder_forward: expected B x 1 x H x W input");
    const std::size_t n_blocks = p.blocks.size();
    const std::size_t H = batch.dim(2), W = batch.dim(3);
    const std::size_t div = std::size_t{1} << n_blocks;
    if (H % div != 0 || W % div != 0)
        throw ShapeError("encoder_forward: H and W must be divisible by 2^n_blocks");

    if (cache) {
        cache->blocks.assign(n_blocks, {});
        cache->param_sig = detail::encoder_signature(p);
    }

    Tensor cur = batch;
    for (std::size_t bi = 0; bi < n_blocks; ++bi) {
        const auto& blk = p.blocks[bi];
        const std::size_t B = cur.dim(0), h = cur.dim(2), w = cur.dim(3);
        const std::size_t oc = blk.c1.w.dim(0);

        Tensor pre1({B, oc, h, w});
        detail::conv3x3_forward(cur, blk.c1, pre1);
        Tensor act1(pre1.shape());
        detail::leaky_relu_forward(pre1, act1);
        Tensor pre2({B, oc, h, w});
        detail::conv3x3_forward(act1, blk.c2, pre2);
        Tensor act2(pre2.shape());
        detail::leaky_relu_forward(pre2, act2);

        // 2x2 max pool, stride 2; ties keep the first element in scan order
        const std::size_t ph = h / 2, pw = w / 2;
        Tensor pooled({B, oc, ph, pw});
        std::vector<std::uint32_t> argmax(pooled.numel());
        const double* src = act2.ptr();
        double* dst = pooled.ptr();
        std::size_t o = 0;
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < oc; ++c) {
                const std::size_t base = (b * oc + c) * h * w;
                for (std::size_t y = 0; y < ph; ++y) {
                    for (std::size_t x = 0; x < pw; ++x, ++o) {
                        const std::size_t i00 = base + (2 * y) * w + 2 * x;
                        std::size_t best = i00;
                        double bv = src[i00];
                        const std::size_t cand[3] = {i00 + 1, i00 + w, i00 + w + 1};
                        for (std::size_t ci = 0; ci < 3; ++ci)
                            if (src[cand[ci]] > bv) { bv = src[cand[ci]]; best = cand[ci]; }
                        dst[o] = bv;
                        argmax[o] = static_cast<std::uint32_t>(best);
                    }
                }
            }
        }

        if (cache) {
            auto& bc = cache->blocks[bi];
            bc.in = std::move(cur);
            bc.pre1 = std::move(pre1);
            bc.act1 = std::move(act1);
            bc.pre2 = std::move(pre2);
            bc.pool_argmax = std::move(argmax);
            bc.out_shape = pooled.shape();
        }
        cur = std::move(pooled);
    }
    return cur;
}

inline EncoderParams encoder_grads_like(const EncoderParams& p) {
    EncoderParams g;
    for (const auto& blk : p.blocks) {
        ConvBlock gb;
        gb.c1.w = Tensor(blk.c1.w.shape());
        gb.c1.b = Tensor(blk.c1.b.shape());
        gb.c2.w = Tensor(blk.c2.w.shape());
        gb.c2.b = Tensor(blk.c2.b.shape());
        g.blocks.push_back(std::move(gb));
    }
    return g;
}

// Accumulates parameter gradients into `grads`. The gradient with respect
// to the network input is not produced; nothing consumes it.
inline void encoder_backward(const EncoderParams& p, const EncoderCache& cache,
                             const Tensor& d_features, EncoderParams& grads) {
    if (cache.blocks.size() != p.blocks.size() || cache.param_sig != detail::encoder_signature(p))
        throw StaleCache("encoder_backward: cache does not match parameters");
    if (cache.blocks.empty() || d_features.shape() != cache.blocks.back().out_shape)
        throw StaleCache("encoder_backward: gradient shape does not match cached forward");

    Tensor d_out = d_features;
    for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
        const auto& blk = p.blocks[bi];
        const auto& bc = cache.blocks[bi];

        // unpool: route each pooled gradient to its argmax source
        Tensor d_act2(bc.pre2.shape());
        const double* g = d_out.ptr();
        for (std::size_t o = 0; o < d_out.numel(); ++o)
            d_act2[bc.pool_argmax[o]] += g[o];

        detail::leaky_relu_backward(bc.pre2, d_act2);
        Tensor d_act1(bc.act1.shape());
        detail::conv3x3_backward(bc.act1, blk.c2, d_act2, grads.blocks[bi].c2, &d_act1);
        detail::leaky_relu_backward(bc.pre1, d_act1);
        if (bi == 0) {
            detail::conv3x3_backward(bc.in, blk.c1, d_act1, grads.blocks[bi].c1, nullptr);
        } else {
            Tensor d_in(bc.in.shape());
            detail::conv3x3_backward(bc.in, blk.c1, d_act1, grads.blocks[bi].c1, &d_in);
            d_out = std::move(d_in);
        }
    }
}

struct ProjectorCache {
    Tensor pooled;     // B x C
    Tensor pre_hidden; // B x hidden
    Tensor hidden;     // relu output
    std::vector<std::size_t> feat_shape;
};

inline Tensor projector_forward(const ProjectorParams& p, const Tensor& features, ProjectorCache* cache) {
    if (features.rank() != 4) throw ShapeError("projector_forward: expected B x C x h x w");
    const std::size_t B = features.dim(0), C = features.dim(1);
    const std::size_t plane = features.dim(2) * features.dim(3);
    if (p.fc1.w.dim(1) != C) throw ShapeError("projector_forward: channel count mismatch");
    const std::size_t hidden = p.fc1.w.dim(0);
    const std::size_t out = p.fc2.w.dim(0);

    Tensor pooled({B, C});
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const double* src = features.ptr() + (b * C + c) * plane;
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += src[i];
            pooled.at(b, c) = s * inv;
        }
    }

    Tensor pre_hidden({B, hidden});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < hidden; ++o) {
            double s = p.fc1.b[o];
            const double* wr = p.fc1.w.ptr() + o * C;
            const double* x = pooled.ptr() + b * C;
            for (std::size_t i = 0; i < C; ++i) s += wr[i] * x[i];
            pre_hidden.at(b, o) = s;
        }

    Tensor hid(pre_hidden.shape());
    for (std::size_t i = 0; i < hid.numel(); ++i)
        hid[i] = pre_hidden[i] > 0.0 ? pre_hidden[i] : 0.0;

    Tensor z({B, out});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < out; ++o) {
            double s = p.fc2.b[o];
            const double* wr = p.fc2.w.ptr() + o * hidden;
            const double* x = hid.ptr() + b * hidden;
            for (std::size_t i = 0; i < hidden; ++i) s += wr[i] * x[i];
            z.at(b, o) = s;
        }

    if (cache) {
        cache->pooled = std::move(pooled);
        cache->pre_hidden = std::move(pre_hidden);
        cache->hidden = std::move(hid);
        cache->feat_shape = features.shape();
    }
    return z;
}

inline ProjectorParams projector_grads_like(const ProjectorParams& p) {
    ProjectorParams g;
    g.fc1.w = Tensor(p.fc1.w.shape());
    g.fc1.b = Tensor(p.fc1.b.shape());
    g.fc2.w = Tensor(p.fc2.w.shape());
    g.fc2.b = Tensor(p.fc2.b.shape());
    return g;
}

// Returns the gradient with respect to the feature map; parameter
// gradients accumulate into `grads`.
inline Tensor projector_backward(const ProjectorParams& p, const ProjectorCache& cache,
                                 const Tensor& d_z, ProjectorParams& grads) {
    if (cache.feat_shape.empty() || cache.pooled.rank() != 2)
        throw StaleCache("projector_backward: empty cache");
    const std::size_t B = cache.pooled.dim(0), C = cache.pooled.dim(1);
    const std::size_t hidden = p.fc1.w.dim(0);
    const std::size_t out = p.fc2.w.dim(0);
    if (d_z.rank() != 2 || d_z.dim(0) != B || d_z.dim(1) != out)
        throw StaleCache("projector_backward: gradient shape does not match cached forward");

    Tensor d_hidden({B, hidden});
    for (std::size_t b = 0; b < B; ++b) {
        const double* gz = d_z.ptr() + b * out;
        const double* hid = cache.hidden.ptr() + b * hidden;
        for (std::size_t o = 0; o < out; ++o) {
            grads.fc2.b[o] += gz[o];
            double* gw = grads.fc2.w.ptr() + o * hidden;
            for (std::size_t i = 0; i < hidden; ++i) gw[i] += gz[o] * hid[i];
        }
        double* gh = d_hidden.ptr() + b * hidden;
        for (std::size_t i = 0; i < hidden; ++i) {
            double s = 0.0;
            for (std::size_t o = 0; o < out; ++o) s += p.fc2.w.ptr()[o * hidden + i] * gz[o];
            gh[i] = cache.pre_hidden.ptr()[b * hidden + i] > 0.0 ? s : 0.0;
        }
    }

    Tensor d_pooled({B, C});
    for (std::size_t b = 0; b < B; ++b) {
        const double* gh = d_hidden.ptr() + b * hidden;
        const double* x = cache.pooled.ptr() + b * C;
        for (std::size_t o = 0; o < hidden; ++o) {
            grads.fc1.b[o] += gh[o];
            double* gw = grads.fc1.w.ptr() + o * C;
            for (std::size_t i = 0; i < C; ++i) gw[i] += gh[o] * x[i];
        }
        double* gp = d_pooled.ptr() + b * C;
        for (std::size_t i = 0; i < C; ++i) {
            double s = 0.0;
            for (std::size_t o = 0; o < hidden; ++o) s += p.fc1.w.ptr()[o * C + i] * gh[o];
            gp[i] = s;
        }
    }

    Tensor d_features(cache.feat_shape);
    const std::size_t plane = cache.feat_shape[2] * cache.feat_shape[3];
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double g = d_pooled.at(b, c) * inv;
            double* dst = d_features.ptr() + (b * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = g;
        }
    return d_features;
}

// Uniform parameter traversal for the optimizer and checkpointing.
template <typename Fn>
void for_each_param(EncoderParams& enc, ProjectorParams& proj, Fn&& fn) {
    for (std::size_t i = 0; i < enc.blocks.size(); ++i) {
        const std::string prefix = "enc.block" + std::to_string(i);
        fn(prefix + ".c1.w", enc.blocks[i].c1.w);
        fn(prefix + ".c1.b", enc.blocks[i].c1.b);
        fn(prefix + ".c2.w", enc.blocks[i].c2.w);
        fn(prefix + ".c2.b", enc.blocks[i].c2.b);
    }
    fn("proj.fc1.w", proj.fc1.w);
    fn("proj.fc1.b", proj.fc1.b);
    fn("proj.fc2.w", proj.fc2.w);
    fn("proj.fc2.b", proj.fc2.b);
}

} // namespace supercl
