#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "supercl/augment.hpp"
#include "supercl/errors.hpp"
#include "supercl/igcp.hpp"
#include "supercl/ilcp.hpp"
#include "supercl/infonce.hpp"
#include "supercl/network.hpp"
#include "supercl/npy.hpp"
#include "supercl/rng.hpp"
#include "supercl/superpixel.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

struct TrainConfig {
    int epochs = 1;
    int steps_per_epoch = 200;
    int batch = 8;
    double lr0 = 0.1;
    double tau = 0.1;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 0.5;
    int stride = 1;
    int k_superpixels = 32;
    int n_blocks = 2;
    int channels = 32;
    int d_proj = 64;
    int image_h = 64;
    int image_w = 64;
    int volumes = 8;
    int slices_per_volume = 8;
    double pcl_threshold = 0.1;
    bool ilcp_cross_view_only = false;
    bool region_normalize = false;
    bool asp_average_both = false;
    std::uint64_t seed = 42;

    int total_steps() const { return epochs * steps_per_epoch; }
    int feature_h() const { return image_h >> n_blocks; }
    int feature_w() const { return image_w >> n_blocks; }
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"epochs", c.epochs},
                          {"steps_per_epoch", c.steps_per_epoch},
                          {"batch", c.batch},
                          {"lr0", c.lr0},
                          {"tau", c.tau},
                          {"lambda1", c.lambda1},
                          {"lambda2", c.lambda2},
                          {"lambda3", c.lambda3},
                          {"stride", c.stride},
                          {"k_superpixels", c.k_superpixels},
                          {"n_blocks", c.n_blocks},
                          {"channels", c.channels},
                          {"d_proj", c.d_proj},
                          {"image_h", c.image_h},
                          {"image_w", c.image_w},
                          {"volumes", c.volumes},
                          {"slices_per_volume", c.slices_per_volume},
                          {"pcl_threshold", c.pcl_threshold},
                          {"ilcp_cross_view_only", c.ilcp_cross_view_only},
                          {"region_normalize", c.region_normalize},
                          {"asp_average_both", c.asp_average_both},
                          {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig d;
    TrainConfig c;
    c.epochs = j.value("epochs", d.epochs);
    c.steps_per_epoch = j.value("steps_per_epoch", d.steps_per_epoch);
    c.batch = j.value("batch", d.batch);
    c.lr0 = j.value("lr0", d.lr0);
    c.tau = j.value("tau", d.tau);
    c.lambda1 = j.value("lambda1", d.lambda1);
    c.lambda2 = j.value("lambda2", d.lambda2);
    c.lambda3 = j.value("lambda3", d.lambda3);
    c.stride = j.value("stride", d.stride);
    c.k_superpixels = j.value("k_superpixels", d.k_superpixels);
    c.n_blocks = j.value("n_blocks", d.n_blocks);
    c.channels = j.value("channels", d.channels);
    c.d_proj = j.value("d_proj", d.d_proj);
    c.image_h = j.value("image_h", d.image_h);
    c.image_w = j.value("image_w", d.image_w);
    c.volumes = j.value("volumes", d.volumes);
    c.slices_per_volume = j.value("slices_per_volume", d.slices_per_volume);
    c.pcl_threshold = j.value("pcl_threshold", d.pcl_threshold);
    c.ilcp_cross_view_only = j.value("ilcp_cross_view_only", d.ilcp_cross_view_only);
    c.region_normalize = j.value("region_normalize", d.region_normalize);
    c.asp_average_both = j.value("asp_average_both", d.asp_average_both);
    c.seed = j.value("seed", d.seed);
    return c;
}

// Synthetic stand-in for unlabeled volumes: smooth blob fields whose
// geometry drifts continuously with the slice index, so neighboring slices
// look alike and the normalized position is a meaningful label.
struct Corpus {
    std::vector<Tensor> images;    // [H, W], values in [0, 1)
    std::vector<double> positions; // normalized slice position in [0, 1]
    std::vector<int> volume_of;
    int height = 0;
    int width = 0;

    std::size_t size() const { return images.size(); }
};

inline Corpus synth_dataset(std::uint64_t seed, int n_volumes, int slices_per_volume, int h, int w) {
    Corpus corpus;
    corpus.height = h;
    corpus.width = w;
    const Rng root(seed);
    const double dim_min = static_cast<double>(std::min(h, w));

    for (int v = 0; v < n_volumes; ++v) {
        Rng rng = root.fork(static_cast<std::uint64_t>(v) + 1);
        const int n_blobs = static_cast<int>(rng.uniform_int(2, 6));
        struct Blob {
            double cx0, cy0, dcx, dcy, r0, dr, a0, da, sharp;
        };
        std::vector<Blob> blobs(n_blobs);
        for (auto& b : blobs) {
            b.cx0 = rng.uniform(0.15, 0.85) * w;
            b.cy0 = rng.uniform(0.15, 0.85) * h;
            b.dcx = rng.uniform(-0.25, 0.25) * w;
            b.dcy = rng.uniform(-0.25, 0.25) * h;
            b.r0 = rng.uniform(0.06, 0.22) * dim_min;
            b.dr = rng.uniform(-0.04, 0.04) * dim_min;
            b.a0 = rng.uniform(0.4, 1.2);
            b.da = rng.uniform(-0.3, 0.3);
            b.sharp = rng.uniform(1.0, 2.5); // super-Gaussian falloff exponent
        }
        // per-volume intensity ramp makes volumes globally distinguishable
        const double base = rng.uniform(0.05, 0.45);
        const double gx = rng.uniform(-0.35, 0.35);
        const double gy = rng.uniform(-0.35, 0.35);
        for (int s = 0; s < slices_per_volume; ++s) {
            const double z = slices_per_volume > 1
                                 ? static_cast<double>(s) / (slices_per_volume - 1)
                                 : 0.0;
            Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double raw = base + gx * (static_cast<double>(x) / w - 0.5) +
                                 gy * (static_cast<double>(y) / h - 0.5);
                    if (raw < 0.0) raw = 0.0;
                    for (const auto& b : blobs) {
                        const double cx = b.cx0 + b.dcx * z;
                        const double cy = b.cy0 + b.dcy * z;
                        const double r = std::max(1.0, b.r0 + b.dr * z);
                        const double a = std::max(0.05, b.a0 + b.da * z);
                        const double dx = x - cx, dy = y - cy;
                        const double q = 0.5 * (dx * dx + dy * dy) / (r * r);
                        raw += a * std::exp(-std::pow(q, b.sharp));
                    }
                    img.at(y, x) = 1.0 - std::exp(-raw);
                }
            }
            corpus.images.push_back(std::move(img));
            corpus.positions.push_back(z);
            corpus.volume_of.push_back(v);
        }
    }
    return corpus;
}

inline double cosine_lr(double lr0, long long t, long long total) {
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(t) /
                                       static_cast<double>(total)));
}

// params <- params - lr_t * grads with lr_t from the cosine schedule.
inline void sgd_cosine_step(EncoderParams& enc, ProjectorParams& proj,
                            EncoderParams& enc_grads, ProjectorParams& proj_grads,
                            long long t, long long total_steps, double lr0) {
    if (t >= total_steps) throw ContractError("sgd_cosine_step: step index past schedule end");
    const double lr = cosine_lr(lr0, t, total_steps);
    std::vector<Tensor*> ps, gs;
    for_each_param(enc, proj, [&](const std::string&, Tensor& t_) { ps.push_back(&t_); });
    for_each_param(enc_grads, proj_grads, [&](const std::string&, Tensor& t_) { gs.push_back(&t_); });
    for (std::size_t i = 0; i < ps.size(); ++i)
        ps[i]->axpy(-lr, *gs[i]);
}

struct StepRecord {
    int step = 0; // 1-based
    double lr = 0.0;
    double total = 0.0;
    double ins = 0.0;
    double intra = 0.0;
    double inter = 0.0;
    std::size_t skipped_ins = 0;
    std::size_t skipped_intra = 0;
    std::size_t skipped_inter = 0;
};

struct RunResult {
    EncoderParams encoder;
    ProjectorParams projector;
    std::vector<StepRecord> curve;
};

namespace detail {

// Gathers the rows of Z^p for one sample: view-1 feature vectors at the
// resampled positions, then view-2.
inline Tensor gather_pixel_rows(const Tensor& y1, const Tensor& y2, std::size_t b,
                                const std::vector<int>& pos) {
    const std::size_t c = y1.dim(1);
    const std::size_t plane = y1.dim(2) * y1.dim(3);
    const std::size_t n_pix = pos.size();
    Tensor z({2 * n_pix, c});
    for (std::size_t r = 0; r < n_pix; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) {
            z.at(r, ch) = y1.ptr()[(b * c + ch) * plane + pos[r]];
            z.at(n_pix + r, ch) = y2.ptr()[(b * c + ch) * plane + pos[r]];
        }
    return z;
}

inline void scatter_pixel_grads(Tensor& dy1, Tensor& dy2, std::size_t b,
                                const std::vector<int>& pos, const Tensor& dz, double scale) {
    const std::size_t c = dy1.dim(1);
    const std::size_t plane = dy1.dim(2) * dy1.dim(3);
    const std::size_t n_pix = pos.size();
    for (std::size_t r = 0; r < n_pix; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) {
            dy1.ptr()[(b * c + ch) * plane + pos[r]] += scale * dz.at(r, ch);
            dy2.ptr()[(b * c + ch) * plane + pos[r]] += scale * dz.at(n_pix + r, ch);
        }
}

} // namespace detail

// Per-image data that does not change across steps: the superpixel map is
// computed once on the original image (the non-spatial augmentation group
// keeps its geometry), downsampled to the feature grid, resampled by the
// stride, and turned into the intra-image positive set.
struct PreparedImage {
    SuperpixelMap feature_map;       // at feature resolution
    std::vector<int> sampled_labels; // after stride resampling
    std::vector<int> sampled_pos;    // flat feature-plane index per sample
    PositiveSet omega_ilcp;
};

inline PreparedImage prepare_image(const Tensor& img, const TrainConfig& cfg) {
    SlicConfig scfg;
    scfg.k_request = cfg.k_superpixels;
    scfg.seed = cfg.seed;
    const SuperpixelMap full = slic_segment(img, scfg);
    PreparedImage prep;
    prep.feature_map = downsample_map(full, cfg.feature_h(), cfg.feature_w());
    prep.sampled_labels =
        resample_pixels(prep.feature_map.labels, cfg.feature_h(), cfg.feature_w(), cfg.stride);
    for (int y = 0; y < cfg.feature_h(); y += cfg.stride)
        for (int x = 0; x < cfg.feature_w(); x += cfg.stride)
            prep.sampled_pos.push_back(y * cfg.feature_w() + x);
    prep.omega_ilcp = build_ilcp_positive_set(prep.sampled_labels, prep.sampled_labels,
                                              cfg.ilcp_cross_view_only);
    return prep;
}

inline RunResult pretrain_run(const TrainConfig& cfg, const Corpus& corpus) {
    if (corpus.size() == 0) throw ContractError("pretrain_run: empty corpus");
    if (corpus.height != cfg.image_h || corpus.width != cfg.image_w)
        throw ShapeError("pretrain_run: corpus image size does not match config");

    const Rng root(cfg.seed);
    Rng init_rng = root.fork(0);
    RunResult run;
    run.encoder = init_encoder(cfg.n_blocks, cfg.channels, init_rng);
    run.projector = init_projector(cfg.channels, cfg.channels, cfg.d_proj, init_rng);

    const int total = cfg.total_steps();
    if (total == 0) return run;

    std::vector<PreparedImage> prepared;
    prepared.reserve(corpus.size());
    for (const Tensor& img : corpus.images) prepared.push_back(prepare_image(img, cfg));

    const std::size_t B = static_cast<std::size_t>(cfg.batch);
    const std::size_t H = static_cast<std::size_t>(cfg.image_h);
    const std::size_t W = static_cast<std::size_t>(cfg.image_w);
    const std::size_t C = static_cast<std::size_t>(cfg.channels);
    const std::size_t fh = static_cast<std::size_t>(cfg.feature_h());
    const std::size_t fw = static_cast<std::size_t>(cfg.feature_w());
    const LossWeights weights{cfg.lambda1, cfg.lambda2, cfg.lambda3, cfg.tau};

    for (int t = 0; t < total; ++t) {
        Rng step_rng = root.fork(1000 + static_cast<std::uint64_t>(t));

        std::vector<std::size_t> batch_idx(B);
        for (std::size_t b = 0; b < B; ++b)
            batch_idx[b] = static_cast<std::size_t>(
                step_rng.uniform_int(0, static_cast<std::int64_t>(corpus.size()) - 1));

        Tensor batch_i1({B, 1, H, W}), batch_i2({B, 1, H, W});
        Tensor batch_v1({B, 1, H, W}), batch_v2({B, 1, H, W});
        for (std::size_t b = 0; b < B; ++b) {
            const Tensor& src = corpus.images[batch_idx[b]];
            const Tensor i1 = augment_nonspatial(src, sample_nonspatial(step_rng));
            const Tensor i2 = augment_nonspatial(src, sample_nonspatial(step_rng));
            const Tensor v1 = augment_spatial(augment_nonspatial(src, sample_nonspatial(step_rng)),
                                              sample_spatial(step_rng));
            const Tensor v2 = augment_spatial(augment_nonspatial(src, sample_nonspatial(step_rng)),
                                              sample_spatial(step_rng));
            std::copy(i1.data().begin(), i1.data().end(), batch_i1.ptr() + b * H * W);
            std::copy(i2.data().begin(), i2.data().end(), batch_i2.ptr() + b * H * W);
            std::copy(v1.data().begin(), v1.data().end(), batch_v1.ptr() + b * H * W);
            std::copy(v2.data().begin(), v2.data().end(), batch_v2.ptr() + b * H * W);
        }

        EncoderCache cache_i1, cache_i2, cache_v1, cache_v2;
        const Tensor y1 = encoder_forward(run.encoder, batch_i1, &cache_i1);
        const Tensor y2 = encoder_forward(run.encoder, batch_i2, &cache_i2);
        const Tensor fv1 = encoder_forward(run.encoder, batch_v1, &cache_v1);
        const Tensor fv2 = encoder_forward(run.encoder, batch_v2, &cache_v2);

        ProjectorCache pcache_v1, pcache_v2;
        const Tensor zi1 = projector_forward(run.projector, fv1, &pcache_v1);
        const Tensor zi2 = projector_forward(run.projector, fv2, &pcache_v2);
        Tensor z_inst({2 * B, static_cast<std::size_t>(cfg.d_proj)});
        std::copy(zi1.data().begin(), zi1.data().end(), z_inst.ptr());
        std::copy(zi2.data().begin(), zi2.data().end(), z_inst.ptr() + zi1.numel());

        // intra term: per-sample InfoNCE over pixel projections, batch mean
        Tensor dy1({B, C, fh, fw}), dy2({B, C, fh, fw});
        double intra_value = 0.0;
        std::size_t intra_skipped = 0;
        const double inv_b = 1.0 / static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) {
            const PreparedImage& prep = prepared[batch_idx[b]];
            const Tensor zp = detail::gather_pixel_rows(y1, y2, b, prep.sampled_pos);
            const InfoNceResult r = loss_intra(zp, prep.omega_ilcp, cfg.tau);
            intra_value += r.loss * inv_b;
            intra_skipped += r.skipped;
            detail::scatter_pixel_grads(dy1, dy2, b, prep.sampled_pos, r.grad,
                                        cfg.lambda2 * inv_b);
        }

        // weak label from the spatially aligned view's features
        Tensor y_asp = y1;
        if (cfg.asp_average_both) {
            y_asp.axpy(1.0, y2);
            y_asp *= 0.5;
        }
        std::vector<SuperpixelMap> batch_maps;
        batch_maps.reserve(B);
        for (std::size_t b = 0; b < B; ++b)
            batch_maps.push_back(prepared[batch_idx[b]].feature_map);
        const Tensor ym = channel_mean(y_asp);
        const Tensor p = asp_feature(ym, batch_maps, cfg.region_normalize);
        const Tensor aff = affinity_matrix(p);
        const Tensor adj = top1_adjacency(aff);
        const Tensor wlabel = connected_components_weak_label(adj);
        const PositiveSet omega_w = extend_weak_label(wlabel);

        std::vector<double> batch_positions(B);
        for (std::size_t b = 0; b < B; ++b) batch_positions[b] = corpus.positions[batch_idx[b]];
        const PositiveSet omega_pcl = positive_set_pcl(batch_positions, cfg.pcl_threshold);

        const InfoNceResult r_ins = supervised_infonce(z_inst, omega_pcl, cfg.tau);
        const InfoNceResult r_inter = loss_inter(z_inst, omega_w, cfg.tau);

        const double total_value = weights.lambda1 * r_ins.loss + weights.lambda2 * intra_value +
                                   weights.lambda3 * r_inter.loss;

        // backward: instance path then pixel path, fixed order
        Tensor dz_inst(z_inst.shape());
        dz_inst.axpy(weights.lambda1, r_ins.grad);
        dz_inst.axpy(weights.lambda3, r_inter.grad);
        Tensor dzi1({B, static_cast<std::size_t>(cfg.d_proj)});
        Tensor dzi2({B, static_cast<std::size_t>(cfg.d_proj)});
        std::copy(dz_inst.data().begin(), dz_inst.data().begin() + dzi1.numel(), dzi1.ptr());
        std::copy(dz_inst.data().begin() + dzi1.numel(), dz_inst.data().end(), dzi2.ptr());

        EncoderParams enc_grads = encoder_grads_like(run.encoder);
        ProjectorParams proj_grads = projector_grads_like(run.projector);

        encoder_backward(run.encoder, cache_i1, dy1, enc_grads);
        encoder_backward(run.encoder, cache_i2, dy2, enc_grads);
        const Tensor dfv1 = projector_backward(run.projector, pcache_v1, dzi1, proj_grads);
        const Tensor dfv2 = projector_backward(run.projector, pcache_v2, dzi2, proj_grads);
        encoder_backward(run.encoder, cache_v1, dfv1, enc_grads);
        encoder_backward(run.encoder, cache_v2, dfv2, enc_grads);

        StepRecord rec;
        rec.step = t + 1;
        rec.lr = cosine_lr(cfg.lr0, t, total);
        rec.total = total_value;
        rec.ins = r_ins.loss;
        rec.intra = intra_value;
        rec.inter = r_inter.loss;
        rec.skipped_ins = r_ins.skipped;
        rec.skipped_intra = intra_skipped;
        rec.skipped_inter = r_inter.skipped;
        run.curve.push_back(rec);

        sgd_cosine_step(run.encoder, run.projector, enc_grads, proj_grads, t, total, cfg.lr0);
    }
    return run;
}

// ---- checkpoint + loss curve files ------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_loss_curve(const std::string& path, const std::vector<StepRecord>& curve) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FileError("cannot write loss curve: " + path);
    f << "step,lr,total,ins,intra,inter\n";
    for (const auto& r : curve)
        f << r.step << ',' << format_double(r.lr) << ',' << format_double(r.total) << ','
          << format_double(r.ins) << ',' << format_double(r.intra) << ',' << format_double(r.inter)
          << '\n';
}

inline void save_checkpoint(const std::string& dir, EncoderParams& enc, ProjectorParams& proj,
                            const TrainConfig& cfg) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["config"] = config_to_json(cfg);
    manifest["params"] = nlohmann::json::array();
    int index = 0;
    for_each_param(enc, proj, [&](const std::string& name, Tensor& t) {
        std::string fname = name;
        for (char& c : fname)
            if (c == '.') c = '_';
        char num[16];
        std::snprintf(num, sizeof(num), "p%03d_", index++);
        fname = std::string(num) + fname + ".npy";
        save_npy(dir + "/" + fname, t);
        manifest["params"].push_back(
            {{"name", name}, {"file", fname}, {"shape", t.shape()}});
    });
    std::ofstream f(dir + "/manifest.json", std::ios::trunc);
    if (!f) throw FileError("cannot write manifest: " + dir);
    f << manifest.dump(2) << '\n';
}

struct Checkpoint {
    EncoderParams encoder;
    ProjectorParams projector;
    TrainConfig config;
};

inline Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw FileError("cannot open manifest: " + dir);
    nlohmann::json manifest;
    f >> manifest;
    Checkpoint ckpt;
    ckpt.config = config_from_json(manifest.at("config"));
    Rng dummy(0);
    ckpt.encoder = init_encoder(ckpt.config.n_blocks, ckpt.config.channels, dummy);
    ckpt.projector =
        init_projector(ckpt.config.channels, ckpt.config.channels, ckpt.config.d_proj, dummy);
    std::size_t i = 0;
    const auto& params = manifest.at("params");
    for_each_param(ckpt.encoder, ckpt.projector, [&](const std::string& name, Tensor& t) {
        const auto& entry = params.at(i++);
        if (entry.at("name").get<std::string>() != name)
            throw FormatError("checkpoint manifest order does not match architecture");
        Tensor loaded = load_npy(dir + "/" + entry.at("file").get<std::string>());
        if (loaded.shape() != t.shape())
            throw FormatError("checkpoint parameter shape mismatch for " + name);
        t = std::move(loaded);
    });
    return ckpt;
}

} // namespace supercl
