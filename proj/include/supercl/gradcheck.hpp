#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "supercl/augment.hpp"
#include "supercl/igcp.hpp"
#include "supercl/ilcp.hpp"
#include "supercl/infonce.hpp"
#include "supercl/network.hpp"
#include "supercl/pretrain.hpp"
#include "supercl/rng.hpp"

namespace supercl {

// Finite-difference verification of every gradient the training loop uses:
// the three loss gradients with respect to projections, and the parameter
// gradients of the full encoder/projector pipeline. Relative error of a
// gradient tensor is ||analytic - fd||_inf / ||analytic||_inf.

struct GradCheckReport {
    double max_rel_projection = 0.0;
    double max_rel_network = 0.0;
    double tol_projection = 1e-6;
    double tol_network = 1e-5;

    bool ok() const {
        return max_rel_projection < tol_projection && max_rel_network < tol_network;
    }
};

namespace detail {

inline double fd_tensor_rel_error(const Tensor& analytic,
                                  const std::function<double(const Tensor&)>& eval, Tensor work,
                                  double h = 1e-5) {
    double max_abs = 0.0;
    double grad_scale = 0.0;
    for (double v : analytic.data()) grad_scale = std::max(grad_scale, std::abs(v));
    for (std::size_t i = 0; i < work.numel(); ++i) {
        const double saved = work[i];
        work[i] = saved + h;
        const double up = eval(work);
        work[i] = saved - h;
        const double down = eval(work);
        work[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        max_abs = std::max(max_abs, std::abs(analytic[i] - fd));
    }
    return max_abs / std::max(grad_scale, 1e-300);
}

inline PositiveSet random_cluster_positive_set(std::size_t n_pix, int k, Rng& rng,
                                               bool as_lifted_graph) {
    if (as_lifted_graph) {
        // random symmetric base relation over n_pix samples, lifted to 2*n_pix
        Tensor base({n_pix, n_pix});
        for (std::size_t i = 0; i < n_pix; ++i)
            for (std::size_t j = i + 1; j < n_pix; ++j)
                if (rng.uniform() < 0.3) {
                    base.at(i, j) = 1.0;
                    base.at(j, i) = 1.0;
                }
        return lift_base_relation(base);
    }
    std::vector<int> labels(n_pix);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(0, k - 1));
    return build_ilcp_positive_set(labels, labels);
}

} // namespace detail

// Checks loss_intra / loss_inter / loss_ins gradients w.r.t. projections on
// randomized instances, rotating through the three positive-set providers.
inline double gradcheck_projections(std::uint64_t seed, int trials = 30) {
    Rng rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const int provider = trial % 3;
        PositiveSet omega;
        std::size_t n;
        if (provider == 0) {
            const std::size_t n_pix = static_cast<std::size_t>(rng.uniform_int(2, 12));
            omega = detail::random_cluster_positive_set(n_pix, static_cast<int>(rng.uniform_int(1, 4)),
                                                        rng, false);
            n = 2 * n_pix;
        } else if (provider == 1) {
            const std::size_t b = static_cast<std::size_t>(rng.uniform_int(2, 12));
            omega = detail::random_cluster_positive_set(b, 0, rng, true);
            n = 2 * b;
        } else {
            const std::size_t b = static_cast<std::size_t>(rng.uniform_int(2, 12));
            std::vector<double> pos(b);
            for (auto& p : pos) p = rng.uniform();
            omega = positive_set_pcl(pos, 0.2);
            n = 2 * b;
        }
        const std::size_t c = static_cast<std::size_t>(rng.uniform_int(2, 16));
        const double tau = 0.1;
        Tensor z({n, c});
        for (double& v : z.data()) v = rng.normal();

        const InfoNceResult res = supervised_infonce(z, omega, tau);
        const double rel = detail::fd_tensor_rel_error(
            res.grad,
            [&](const Tensor& zt) { return supervised_infonce(zt, omega, tau).loss; }, z);
        worst = std::max(worst, rel);
    }
    return worst;
}

namespace detail {

struct TinyPipeline {
    TrainConfig cfg;
    Tensor batch_i1, batch_i2, batch_v1, batch_v2;
    std::vector<PreparedImage> prep;
    std::vector<std::size_t> batch_idx;
    PositiveSet omega_pcl;
    PositiveSet omega_w; // frozen at the base parameters

    // full three-term loss with the positive sets held fixed
    double eval(EncoderParams& enc, ProjectorParams& proj) const {
        EncoderCache c1, c2, c3, c4;
        const Tensor y1 = encoder_forward(enc, batch_i1, &c1);
        const Tensor y2 = encoder_forward(enc, batch_i2, &c2);
        const Tensor f1 = encoder_forward(enc, batch_v1, &c3);
        const Tensor f2 = encoder_forward(enc, batch_v2, &c4);
        ProjectorCache p1, p2;
        const Tensor zi1 = projector_forward(proj, f1, &p1);
        const Tensor zi2 = projector_forward(proj, f2, &p2);
        const std::size_t b = zi1.dim(0);
        Tensor z_inst({2 * b, zi1.dim(1)});
        std::copy(zi1.data().begin(), zi1.data().end(), z_inst.ptr());
        std::copy(zi2.data().begin(), zi2.data().end(), z_inst.ptr() + zi1.numel());

        double intra = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const Tensor zp = gather_pixel_rows(y1, y2, i, prep[batch_idx[i]].sampled_pos);
            intra += supervised_infonce(zp, prep[batch_idx[i]].omega_ilcp, cfg.tau).loss;
        }
        intra /= static_cast<double>(b);
        const double ins = supervised_infonce(z_inst, omega_pcl, cfg.tau).loss;
        const double inter = supervised_infonce(z_inst, omega_w, cfg.tau).loss;
        return cfg.lambda1 * ins + cfg.lambda2 * intra + cfg.lambda3 * inter;
    }

    void grads(EncoderParams& enc, ProjectorParams& proj, EncoderParams& enc_g,
               ProjectorParams& proj_g) const {
        EncoderCache c1, c2, c3, c4;
        const Tensor y1 = encoder_forward(enc, batch_i1, &c1);
        const Tensor y2 = encoder_forward(enc, batch_i2, &c2);
        const Tensor f1 = encoder_forward(enc, batch_v1, &c3);
        const Tensor f2 = encoder_forward(enc, batch_v2, &c4);
        ProjectorCache p1, p2;
        const Tensor zi1 = projector_forward(proj, f1, &p1);
        const Tensor zi2 = projector_forward(proj, f2, &p2);
        const std::size_t b = zi1.dim(0);
        Tensor z_inst({2 * b, zi1.dim(1)});
        std::copy(zi1.data().begin(), zi1.data().end(), z_inst.ptr());
        std::copy(zi2.data().begin(), zi2.data().end(), z_inst.ptr() + zi1.numel());

        Tensor dy1(y1.shape()), dy2(y2.shape());
        const double inv_b = 1.0 / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
            const Tensor zp = gather_pixel_rows(y1, y2, i, prep[batch_idx[i]].sampled_pos);
            const InfoNceResult r = supervised_infonce(zp, prep[batch_idx[i]].omega_ilcp, cfg.tau);
            scatter_pixel_grads(dy1, dy2, i, prep[batch_idx[i]].sampled_pos, r.grad,
                                cfg.lambda2 * inv_b);
        }
        const InfoNceResult r_ins = supervised_infonce(z_inst, omega_pcl, cfg.tau);
        const InfoNceResult r_inter = supervised_infonce(z_inst, omega_w, cfg.tau);
        Tensor dz(z_inst.shape());
        dz.axpy(cfg.lambda1, r_ins.grad);
        dz.axpy(cfg.lambda3, r_inter.grad);
        Tensor dzi1({b, zi1.dim(1)}), dzi2({b, zi1.dim(1)});
        std::copy(dz.data().begin(), dz.data().begin() + dzi1.numel(), dzi1.ptr());
        std::copy(dz.data().begin() + dzi1.numel(), dz.data().end(), dzi2.ptr());

        encoder_backward(enc, c1, dy1, enc_g);
        encoder_backward(enc, c2, dy2, enc_g);
        const Tensor df1 = projector_backward(proj, p1, dzi1, proj_g);
        const Tensor df2 = projector_backward(proj, p2, dzi2, proj_g);
        encoder_backward(enc, c3, df1, enc_g);
        encoder_backward(enc, c4, df2, enc_g);
    }
};

inline TinyPipeline make_tiny_pipeline(std::uint64_t seed) {
    TinyPipeline tp;
    tp.cfg.batch = 2;
    tp.cfg.image_h = tp.cfg.image_w = 8;
    tp.cfg.n_blocks = 2;
    tp.cfg.channels = 8;
    tp.cfg.d_proj = 8;
    tp.cfg.k_superpixels = 3;
    tp.cfg.stride = 1;
    tp.cfg.seed = seed;

    const Corpus corpus = synth_dataset(seed, 1, 2, 8, 8);
    for (const Tensor& img : corpus.images) tp.prep.push_back(prepare_image(img, tp.cfg));
    tp.batch_idx = {0, 1};

    Rng rng(seed + 7);
    const std::size_t B = 2, H = 8, W = 8;
    tp.batch_i1 = Tensor({B, 1, H, W});
    tp.batch_i2 = Tensor({B, 1, H, W});
    tp.batch_v1 = Tensor({B, 1, H, W});
    tp.batch_v2 = Tensor({B, 1, H, W});
    for (std::size_t b = 0; b < B; ++b) {
        const Tensor& src = corpus.images[tp.batch_idx[b]];
        const Tensor i1 = augment_nonspatial(src, sample_nonspatial(rng));
        const Tensor i2 = augment_nonspatial(src, sample_nonspatial(rng));
        const Tensor v1 =
            augment_spatial(augment_nonspatial(src, sample_nonspatial(rng)), sample_spatial(rng));
        const Tensor v2 =
            augment_spatial(augment_nonspatial(src, sample_nonspatial(rng)), sample_spatial(rng));
        std::copy(i1.data().begin(), i1.data().end(), tp.batch_i1.ptr() + b * H * W);
        std::copy(i2.data().begin(), i2.data().end(), tp.batch_i2.ptr() + b * H * W);
        std::copy(v1.data().begin(), v1.data().end(), tp.batch_v1.ptr() + b * H * W);
        std::copy(v2.data().begin(), v2.data().end(), tp.batch_v2.ptr() + b * H * W);
    }

    std::vector<double> positions = {corpus.positions[0], corpus.positions[1]};
    tp.omega_pcl = positive_set_pcl(positions, tp.cfg.pcl_threshold);
    return tp;
}

} // namespace detail

// Network-parameter check on a miniature configuration: the weak label and
// the other positive sets are computed once at the base parameters and held
// fixed, which is exactly what the analytic gradient assumes.
inline double gradcheck_network(std::uint64_t seed) {
    detail::TinyPipeline tp = detail::make_tiny_pipeline(seed);

    Rng init_rng(seed + 13);
    EncoderParams enc = init_encoder(tp.cfg.n_blocks, tp.cfg.channels, init_rng);
    ProjectorParams proj = init_projector(tp.cfg.channels, tp.cfg.channels, tp.cfg.d_proj, init_rng);

    // freeze the weak label at the base parameters
    {
        EncoderCache c;
        const Tensor y1 = encoder_forward(enc, tp.batch_i1, &c);
        std::vector<SuperpixelMap> maps;
        for (std::size_t i : tp.batch_idx) maps.push_back(tp.prep[i].feature_map);
        const Tensor ym = channel_mean(y1);
        const Tensor p = asp_feature(ym, maps);
        const Tensor adj = top1_adjacency(affinity_matrix(p));
        tp.omega_w = extend_weak_label(connected_components_weak_label(adj));
    }

    EncoderParams enc_g = encoder_grads_like(enc);
    ProjectorParams proj_g = projector_grads_like(proj);
    tp.grads(enc, proj, enc_g, proj_g);

    std::vector<Tensor*> params, grads;
    for_each_param(enc, proj, [&](const std::string&, Tensor& t) { params.push_back(&t); });
    for_each_param(enc_g, proj_g, [&](const std::string&, Tensor& t) { grads.push_back(&t); });

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        const Tensor& g = *grads[pi];
        double grad_scale = 0.0;
        for (double v : g.data()) grad_scale = std::max(grad_scale, std::abs(v));
        double max_abs = 0.0;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const double up = tp.eval(enc, proj);
            p[i] = saved - h;
            const double down = tp.eval(enc, proj);
            p[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            max_abs = std::max(max_abs, std::abs(g[i] - fd));
        }
        worst = std::max(worst, max_abs / std::max(grad_scale, 1e-300));
    }
    return worst;
}

inline GradCheckReport run_gradcheck(std::uint64_t seed) {
    GradCheckReport rep;
    rep.max_rel_projection = gradcheck_projections(seed);
    rep.max_rel_network = gradcheck_network(seed);
    return rep;
}

} // namespace supercl
