#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "supercl/supercl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw supercl::FileError("cannot open file: " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw supercl::FileError("cannot open file for writing: " + path);
    f << text;
}

void cmd_superpixel(const std::string& in, int k, double m, int iters, std::uint64_t seed,
                    const std::string& out_labels, const std::string& out_vis) {
    const supercl::ImageU8 img = supercl::read_pgm(supercl::read_file_bytes(in));
    const supercl::Tensor gray = supercl::normalize_gray(img);
    supercl::SlicConfig cfg;
    cfg.k_request = k;
    cfg.compactness = m;
    cfg.iterations = iters;
    cfg.seed = seed;
    const supercl::SuperpixelMap map = supercl::slic_segment(gray, cfg);
    if (!out_labels.empty())
        supercl::save_npy(out_labels, supercl::map_to_label_tensor(map));
    if (!out_vis.empty())
        supercl::write_file_bytes(out_vis, supercl::write_ppm(supercl::colorize_map(map, seed)));
    std::cerr << "superpixel: " << map.num_clusters << " clusters over " << map.height << "x"
              << map.width << "\n";
}

void cmd_ilcp(const std::string& labels_path, int feat_h, int feat_w, int stride,
              bool cross_view_only, const std::string& out) {
    const supercl::SuperpixelMap map =
        supercl::map_from_label_tensor(supercl::load_npy(labels_path));
    const supercl::SuperpixelMap down = supercl::downsample_map(map, feat_h, feat_w);
    const std::vector<int> sampled =
        supercl::resample_pixels(down.labels, feat_h, feat_w, stride);
    const supercl::PositiveSet omega =
        supercl::build_ilcp_positive_set(sampled, sampled, cross_view_only);
    write_text(out, supercl::positive_set_to_text(omega));
    std::cerr << "ilcp: " << omega.n << " anchors\n";
}

void cmd_igcp(const std::string& features_path, const std::string& labels_path,
              const std::string& out_affinity, const std::string& out_adj,
              const std::string& out_weak, const std::string& out_components,
              bool region_normalize) {
    const supercl::Tensor y = supercl::load_npy(features_path);
    if (y.rank() != 4) throw supercl::ShapeError("igcp: features must be B x C x h x w");
    const supercl::Tensor label_t = supercl::load_npy(labels_path);
    const std::vector<supercl::SuperpixelMap> maps = supercl::maps_from_label_tensor(label_t);
    if (maps.size() != y.dim(0))
        throw supercl::ShapeError("igcp: batch size of features and label maps differ");

    const supercl::Tensor ym = supercl::channel_mean(y);
    const supercl::Tensor p = supercl::asp_feature(ym, maps, region_normalize);
    const supercl::Tensor c = supercl::affinity_matrix(p);
    const supercl::Tensor a = supercl::top1_adjacency(c);
    const supercl::Tensor w = supercl::connected_components_weak_label(a);

    if (!out_affinity.empty()) supercl::save_npy(out_affinity, c);
    if (!out_adj.empty()) supercl::save_npy(out_adj, a);
    if (!out_weak.empty()) supercl::save_npy(out_weak, w);
    if (!out_components.empty()) write_text(out_components, supercl::weak_label_components_text(w));
    std::cerr << "igcp: processed batch of " << y.dim(0) << "\n";
}

std::vector<double> parse_weights(const std::string& s) {
    std::vector<double> w;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            w.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw supercl::ContractError("loss: bad --weights entry '" + tok + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (w.size() != 3) throw supercl::ContractError("loss: --weights needs three comma-separated values");
    return w;
}

void cmd_loss(const std::string& pixel_path, const std::string& instance_path,
              const std::string& pairs_intra, const std::string& pairs_ins,
              const std::string& pairs_inter, const std::string& weights_str, double tau,
              const std::string& out) {
    const std::vector<double> lambdas = parse_weights(weights_str);
    supercl::LossWeights weights{lambdas[0], lambdas[1], lambdas[2], tau};

    supercl::LossTerm ins, intra, inter;
    if (pixel_path.empty() != pairs_intra.empty())
        throw supercl::ContractError("loss: the intra term needs both --pixel and --pairs-intra");
    if (!pixel_path.empty()) {
        const supercl::Tensor zp = supercl::load_npy(pixel_path);
        const supercl::PositiveSet omega = supercl::positive_set_from_text(read_text(pairs_intra));
        intra = supercl::LossTerm(supercl::loss_intra(zp, omega, tau));
    }
    if (!instance_path.empty()) {
        const supercl::Tensor zi = supercl::load_npy(instance_path);
        if (!pairs_ins.empty()) {
            const supercl::PositiveSet omega = supercl::positive_set_from_text(read_text(pairs_ins));
            ins = supercl::LossTerm(supercl::supervised_infonce(zi, omega, tau));
        }
        if (!pairs_inter.empty()) {
            const supercl::PositiveSet omega = supercl::positive_set_from_text(read_text(pairs_inter));
            inter = supercl::LossTerm(supercl::loss_inter(zi, omega, tau));
        }
    } else if (!pairs_ins.empty() || !pairs_inter.empty()) {
        throw supercl::ContractError("loss: instance pair files need --instance projections");
    }
    if (!ins.present && !intra.present && !inter.present)
        throw supercl::ContractError("loss: no term could be evaluated from the supplied inputs");

    const supercl::LossReport report = supercl::total_loss(ins, intra, inter, weights);
    json j;
    j["total"] = report.total;
    j["terms"] = {{"ins", report.ins.value}, {"intra", report.intra.value}, {"inter", report.inter.value}};
    j["skipped"] = {{"ins", report.ins.skipped},
                    {"intra", report.intra.skipped},
                    {"inter", report.inter.skipped}};
    j["grad_norms"] = {
        {"pixel", report.intra.present ? supercl::grad_norm(report.grad_pixel) : 0.0},
        {"instance",
         (report.ins.present || report.inter.present) ? supercl::grad_norm(report.grad_instance) : 0.0}};
    j["weights"] = {{"lambda1", weights.lambda1},
                    {"lambda2", weights.lambda2},
                    {"lambda3", weights.lambda3},
                    {"tau", weights.tau}};
    j["evaluated"] = {{"ins", ins.present}, {"intra", intra.present}, {"inter", inter.present}};
    write_text(out, j.dump(2) + "\n");
    std::cerr << "loss: total " << report.total << "\n";
}

void cmd_synth(std::uint64_t seed, int volumes, int slices, int height, int width,
               const std::string& out_dir) {
    fs::create_directories(out_dir);
    const supercl::Corpus corpus = supercl::synth_dataset(seed, volumes, slices, height, width);
    for (int v = 0; v < volumes; ++v) {
        supercl::Tensor vol({static_cast<std::size_t>(slices), static_cast<std::size_t>(height),
                             static_cast<std::size_t>(width)});
        for (int s = 0; s < slices; ++s) {
            const supercl::Tensor& img = corpus.images[static_cast<std::size_t>(v) * slices + s];
            std::copy(img.data().begin(), img.data().end(),
                      vol.ptr() + static_cast<std::size_t>(s) * height * width);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "vol_%03d.npy", v);
        supercl::save_npy(out_dir + "/" + name, vol);
    }
    std::cerr << "synth: wrote " << volumes << " volumes to " << out_dir << "\n";
}

supercl::Corpus load_corpus_dir(const std::string& dir) {
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw supercl::FileError("data dir not found: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("vol_", 0) == 0 && name.size() > 4 && name.substr(name.size() - 4) == ".npy")
            files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw supercl::FileError("data dir has no vol_*.npy files: " + dir);

    supercl::Corpus corpus;
    int vol_id = 0;
    for (const std::string& f : files) {
        const supercl::Tensor vol = supercl::load_npy(f);
        if (vol.rank() != 3) throw supercl::FormatError("volume must be S x H x W: " + f);
        const int s_count = static_cast<int>(vol.dim(0));
        const int h = static_cast<int>(vol.dim(1));
        const int w = static_cast<int>(vol.dim(2));
        if (corpus.height == 0) {
            corpus.height = h;
            corpus.width = w;
        } else if (corpus.height != h || corpus.width != w) {
            throw supercl::FormatError("volumes disagree on slice size: " + f);
        }
        for (int s = 0; s < s_count; ++s) {
            supercl::Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
            std::copy(vol.ptr() + static_cast<std::size_t>(s) * h * w,
                      vol.ptr() + static_cast<std::size_t>(s + 1) * h * w, img.ptr());
            corpus.images.push_back(std::move(img));
            corpus.positions.push_back(s_count > 1 ? static_cast<double>(s) / (s_count - 1) : 0.0);
            corpus.volume_of.push_back(vol_id);
        }
        ++vol_id;
    }
    return corpus;
}

void cmd_pretrain(const std::string& config_path, const std::string& data_dir,
                  const std::string& out_dir) {
    json j;
    {
        std::ifstream f(config_path);
        if (!f) throw supercl::FileError("cannot open config: " + config_path);
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw supercl::FormatError(std::string("bad config json: ") + e.what());
        }
    }
    const supercl::TrainConfig cfg = supercl::config_from_json(j);
    const supercl::Corpus corpus =
        data_dir.empty()
            ? supercl::synth_dataset(cfg.seed, cfg.volumes, cfg.slices_per_volume, cfg.image_h,
                                     cfg.image_w)
            : load_corpus_dir(data_dir);

    supercl::RunResult run = supercl::pretrain_run(cfg, corpus);
    fs::create_directories(out_dir);
    supercl::save_checkpoint(out_dir, run.encoder, run.projector, cfg);
    supercl::write_loss_curve(out_dir + "/loss_curve.csv", run.curve);
    if (!run.curve.empty())
        std::cerr << "pretrain: " << run.curve.size() << " steps, final total "
                  << run.curve.back().total << "\n";
    else
        std::cerr << "pretrain: 0 steps, checkpoint equals initialization\n";
}

int cmd_gradcheck(std::uint64_t seed) {
    const supercl::GradCheckReport rep = supercl::run_gradcheck(seed);
    std::printf("projection gradients max rel error: %.3e (tolerance %.0e)\n",
                rep.max_rel_projection, rep.tol_projection);
    std::printf("network parameter gradients max rel error: %.3e (tolerance %.0e)\n",
                rep.max_rel_network, rep.tol_network);
    return rep.ok() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"superpixel-guided contrastive pre-training toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;

    // superpixel
    auto* sp = app.add_subcommand("superpixel", "segment a PGM image into superpixels");
    std::string sp_in, sp_out_labels, sp_out_vis;
    int sp_k = 100, sp_iters = 10;
    double sp_m = 10.0;
    std::uint64_t sp_seed = 0;
    sp->add_option("--in", sp_in, "input image (binary PGM, maxval 255)")->required();
    sp->add_option("--k", sp_k, "requested cluster count")->capture_default_str();
    sp->add_option("--m", sp_m, "compactness")->capture_default_str();
    sp->add_option("--iters", sp_iters, "assignment/update iterations")->capture_default_str();
    sp->add_option("--seed", sp_seed, "seed for the colorized output")->capture_default_str();
    sp->add_option("--out-labels", sp_out_labels, "label map output (NPY)");
    sp->add_option("--out-vis", sp_out_vis, "colorized output (PPM)");
    sp->callback([&] { cmd_superpixel(sp_in, sp_k, sp_m, sp_iters, sp_seed, sp_out_labels, sp_out_vis); });

    // ilcp
    auto* il = app.add_subcommand("ilcp", "build the intra-image positive set from a label map");
    std::string il_labels, il_out;
    int il_fh = 32, il_fw = 32, il_stride = 1;
    bool il_cross = false;
    il->add_option("--labels", il_labels, "superpixel label map (NPY)")->required();
    il->add_option("--feat-h", il_fh, "feature map height")->capture_default_str();
    il->add_option("--feat-w", il_fw, "feature map width")->capture_default_str();
    il->add_option("--stride", il_stride, "pixel resampling stride")->capture_default_str();
    il->add_flag("--cross-view-only", il_cross, "restrict positives to cross-view pairs");
    il->add_option("--out", il_out, "positive set output (text)")->required();
    il->callback([&] { cmd_ilcp(il_labels, il_fh, il_fw, il_stride, il_cross, il_out); });

    // igcp
    auto* ig = app.add_subcommand("igcp", "affinity, top-1 graph and weak label from features");
    std::string ig_features, ig_labels, ig_aff, ig_adj, ig_weak, ig_comps;
    bool ig_region = false;
    ig->add_option("--features", ig_features, "feature maps, B x C x h x w (NPY)")->required();
    ig->add_option("--labels", ig_labels, "superpixel label maps, B x h x w (NPY)")->required();
    ig->add_option("--out-affinity", ig_aff, "affinity matrix output (NPY)");
    ig->add_option("--out-adj", ig_adj, "adjacency matrix output (NPY)");
    ig->add_option("--out-weak", ig_weak, "weak label output (NPY)");
    ig->add_option("--out-components", ig_comps, "component listing output (text)");
    ig->add_flag("--region-normalize", ig_region, "normalize cluster means by area instead of h*w");
    ig->callback([&] {
        cmd_igcp(ig_features, ig_labels, ig_aff, ig_adj, ig_weak, ig_comps, ig_region);
    });

    // loss
    auto* lo = app.add_subcommand("loss", "evaluate the weighted contrastive losses");
    std::string lo_pixel, lo_instance, lo_pi, lo_pins, lo_pinter, lo_weights = "1.0,1.0,0.5", lo_out;
    double lo_tau = 0.1;
    lo->add_option("--pixel", lo_pixel, "pixel projections, n x C (NPY)");
    lo->add_option("--instance", lo_instance, "instance projections, n x C (NPY)");
    lo->add_option("--pairs-intra", lo_pi, "positive set for the intra term (text)");
    lo->add_option("--pairs-ins", lo_pins, "positive set for the ins term (text)");
    lo->add_option("--pairs-inter", lo_pinter, "positive set for the inter term (text)");
    lo->add_option("--weights", lo_weights, "lambda1,lambda2,lambda3")->capture_default_str();
    lo->add_option("--tau", lo_tau, "temperature")->capture_default_str();
    lo->add_option("--out", lo_out, "loss report output (JSON)")->required();
    lo->callback([&] {
        cmd_loss(lo_pixel, lo_instance, lo_pi, lo_pins, lo_pinter, lo_weights, lo_tau, lo_out);
    });

    // synth
    auto* sy = app.add_subcommand("synth", "generate a synthetic volume corpus");
    std::string sy_out;
    std::uint64_t sy_seed = 42;
    int sy_volumes = 8, sy_slices = 8, sy_h = 64, sy_w = 64;
    sy->add_option("--seed", sy_seed, "generator seed")->capture_default_str();
    sy->add_option("--volumes", sy_volumes, "number of volumes")->capture_default_str();
    sy->add_option("--slices", sy_slices, "slices per volume")->capture_default_str();
    sy->add_option("--height", sy_h, "slice height")->capture_default_str();
    sy->add_option("--width", sy_w, "slice width")->capture_default_str();
    sy->add_option("--out-dir", sy_out, "output directory")->required();
    sy->callback([&] { cmd_synth(sy_seed, sy_volumes, sy_slices, sy_h, sy_w, sy_out); });

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "run the toy pre-training loop");
    std::string pt_config, pt_data, pt_out;
    pt->add_option("--config", pt_config, "training config (JSON)")->required();
    pt->add_option("--data-dir", pt_data, "directory of vol_*.npy volumes (default: synthesize)");
    pt->add_option("--out-dir", pt_out, "checkpoint + loss curve output directory")->required();
    pt->callback([&] { cmd_pretrain(pt_config, pt_data, pt_out); });

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
    std::uint64_t gc_seed = 42;
    gc->add_option("--seed", gc_seed, "seed for the randomized suites")->capture_default_str();
    gc->callback([&] { exit_code = cmd_gradcheck(gc_seed); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const supercl::ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const supercl::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
