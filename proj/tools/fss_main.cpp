// Command-line front end for the few-shot segmentation pipeline:
// dataset generation, region segmentation, prototype building, pseudo
// labeling, training, evaluation, inference, and the ablation runner.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fss/pipeline.hpp"

using namespace fss;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalArgs {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "out";
    int threads = 1;
};

PipelineConfig make_config(const GlobalArgs& g) {
    PipelineConfig cfg;
    cfg.set_seed(0);
    if (!g.config_path.empty()) {
        std::ifstream is(g.config_path);
        if (!is) throw IoError("cannot read config file: " + g.config_path);
        cfg.apply_json(json::parse(is));
    }
    if (g.seed_set) cfg.set_seed(g.seed);
    cfg.set_threads(g.threads);
    return cfg;
}

void parse_gammas(const std::string& s, LossWeights& w) {
    w.gamma.clear();
    size_t pos = 0;
    while (pos < s.size()) {
        size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        w.gamma.push_back(std::stof(s.substr(pos, next - pos)));
        pos = next + 1;
    }
}

void parse_levels(const std::string& s, ClusterConfig& c) {
    // "8,12;4,6;2,3"
    c.level_sizes.clear();
    size_t pos = 0;
    while (pos < s.size()) {
        size_t next = s.find(';', pos);
        if (next == std::string::npos) next = s.size();
        std::string pair = s.substr(pos, next - pos);
        size_t comma = pair.find(',');
        if (comma == std::string::npos) throw ConfigError("bad level sizes: " + s);
        c.level_sizes.push_back({std::stoi(pair.substr(0, comma)), std::stoi(pair.substr(comma + 1))});
        pos = next + 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot segmentation with semantic-preserving feature learning and a "
                 "self-refined online foreground-background classifier"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are accepted after the subcommand too

    GlobalArgs g;
    app.add_option("--config", g.config_path, "JSON config file")->expected(1);
    app.add_option("--seed", g.seed, "global seed")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--out-dir", g.out_dir, "work directory");
    app.add_option("--threads", g.threads, "worker threads");

    std::string data_dir = "out/dataset";
    int fold = 0;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    gen->add_option("--data", data_dir, "dataset output directory");

    auto* seg = app.add_subcommand("segment-regions", "segment every dataset image into regions");
    seg->add_option("--data", data_dir, "dataset directory");
    float opt_tau = -1.0f, opt_k = -1.0f;
    int opt_min_size = -1;
    seg->add_option("--tau", opt_tau, "contour threshold in (0,1)");
    seg->add_option("--scale-k", opt_k, "merge scale (overrides --tau)");
    seg->add_option("--min-size", opt_min_size, "minimum region size in pixels");

    auto* tb = app.add_subcommand("train-baseline", "train the prototype-matching baseline encoder");
    tb->add_option("--data", data_dir, "dataset directory");
    tb->add_option("--fold", fold, "fold index");
    long opt_iters = -1;
    float opt_lr = -1.0f;
    int opt_pairs = -1, opt_extra = -1;
    tb->add_option("--iters", opt_iters, "training iterations");
    tb->add_option("--lr", opt_lr, "learning rate");
    tb->add_option("--batch-pairs", opt_pairs, "support-query pairs per batch");

    auto* bp = app.add_subcommand("build-prototypes", "extract region descriptors and cluster the hierarchy");
    bp->add_option("--data", data_dir, "dataset directory");
    bp->add_option("--fold", fold, "fold index");
    std::string opt_levels;
    bp->add_option("--levels", opt_levels, "cluster sizes, e.g. 8,12;4,6;2,3");

    auto* pl = app.add_subcommand("pseudo-label", "assign per-level pseudo labels to training images");
    pl->add_option("--data", data_dir, "dataset directory");
    pl->add_option("--fold", fold, "fold index");

    auto* ts = app.add_subcommand("train-spfl", "joint training with hierarchical pseudo supervision");
    ts->add_option("--data", data_dir, "dataset directory");
    ts->add_option("--fold", fold, "fold index");
    bool single_level = false;
    std::string opt_gammas;
    float opt_seg_weight = -1.0f;
    ts->add_flag("--single-level", single_level, "use only the finest prototype level");
    ts->add_option("--iters", opt_iters, "training iterations");
    ts->add_option("--lr", opt_lr, "learning rate");
    ts->add_option("--gammas", opt_gammas, "per-level loss weights, e.g. 0.5,1,1");
    ts->add_option("--seg-weight", opt_seg_weight, "weight of the metric-learning loss");
    ts->add_option("--batch-pairs", opt_pairs, "support-query pairs per batch");
    ts->add_option("--batch-extra", opt_extra, "pseudo-labeled extras per batch");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint over sampled episodes");
    ev->add_option("--data", data_dir, "dataset directory");
    ev->add_option("--fold", fold, "fold index");
    std::string ckpt_dir, mode_name = "srofb-self", report_path;
    int shots = 1, episodes = -1;
    ev->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
    ev->add_option("--mode", mode_name, "matching | srofb | srofb-self");
    ev->add_option("--shots", shots, "supports per episode");
    ev->add_option("--episodes", episodes, "episode count");
    ev->add_option("--report", report_path, "write the report JSON here");

    auto* inf = app.add_subcommand("infer", "segment one episode and write an overlay");
    std::string episode_path, overlay_path;
    float opt_tau_fg = -1.0f, opt_tau_bg = -1.0f;
    long opt_refine_iters = -1;
    inf->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
    inf->add_option("--episode", episode_path, "episode JSON")->required();
    inf->add_option("--mode", mode_name, "matching | srofb | srofb-self");
    inf->add_option("--tau-fg", opt_tau_fg, "foreground harvest threshold");
    inf->add_option("--tau-bg", opt_tau_bg, "background harvest threshold");
    inf->add_option("--iters", opt_refine_iters, "refinement steps (overrides the schedule)");
    inf->add_option("--overlay", overlay_path, "overlay PPM output");

    auto* ab = app.add_subcommand("ablate", "run the full ablation matrix and sweeps");
    ab->add_option("--data", data_dir, "dataset directory");
    int episodes_ab = -1;
    bool no_train = false;
    ab->add_option("--episodes", episodes_ab, "episodes per fold");
    ab->add_flag("--no-train", no_train, "fail instead of training missing checkpoints");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = make_config(g);

        if (gen->parsed()) {
            generate_synthetic_dataset(cfg.dataset, data_dir);
            std::printf("dataset written to %s (%d classes x %d images)\n", data_dir.c_str(),
                        cfg.dataset.num_classes, cfg.dataset.images_per_class);
            return 0;
        }

        DatasetIndex index = load_dataset_index(data_dir);

        if (seg->parsed()) {
            if (opt_tau > 0.0f) cfg.seg.contour_threshold = opt_tau;
            if (opt_k > 0.0f) cfg.seg.scale_k = opt_k;
            if (opt_min_size > 0) cfg.seg.min_region_size = opt_min_size;
            segment_all_regions(index, g.out_dir, cfg.seg, cfg.threads);
            std::printf("regions written under %s/regions\n", g.out_dir.c_str());
        } else if (tb->parsed()) {
            if (opt_iters >= 0) cfg.baseline.total_iterations = opt_iters;
            if (opt_lr > 0.0f) cfg.baseline.sgd.learning_rate = opt_lr;
            if (opt_pairs > 0) cfg.baseline.pairs_per_batch = opt_pairs;
            Checkpoint ckpt = train_baseline_fold(index, g.out_dir, fold, cfg);
            std::printf("baseline checkpoint: %s (param hash %s)\n",
                        (fold_dir(g.out_dir, fold) + "/baseline").c_str(),
                        hex64(ckpt.param_hash()).c_str());
        } else if (bp->parsed()) {
            if (!opt_levels.empty()) parse_levels(opt_levels, cfg.cluster);
            build_prototypes_fold(index, g.out_dir, fold, cfg);
            std::printf("prototype hierarchy: %s\n",
                        (fold_dir(g.out_dir, fold) + "/prototypes").c_str());
        } else if (pl->parsed()) {
            pseudo_label_fold(index, g.out_dir, fold, cfg);
            std::printf("pseudo labels: %s\n", (fold_dir(g.out_dir, fold) + "/pseudo").c_str());
        } else if (ts->parsed()) {
            if (opt_iters >= 0) cfg.spfl.total_iterations = opt_iters;
            if (opt_lr > 0.0f) cfg.spfl.sgd.learning_rate = opt_lr;
            if (opt_pairs > 0) cfg.spfl.pairs_per_batch = opt_pairs;
            if (opt_extra >= 0) cfg.spfl.extra_images_per_batch = opt_extra;
            if (!opt_gammas.empty()) parse_gammas(opt_gammas, cfg.weights);
            if (opt_seg_weight > 0.0f) cfg.weights.seg_weight = opt_seg_weight;
            Checkpoint ckpt = train_spfl_fold(index, g.out_dir, fold, cfg, single_level);
            std::printf("spfl checkpoint: %s (param hash %s)\n",
                        (fold_dir(g.out_dir, fold) + (single_level ? "/spfl_single" : "/spfl_hier")).c_str(),
                        hex64(ckpt.param_hash()).c_str());
        } else if (ev->parsed()) {
            Checkpoint ckpt = load_checkpoint(ckpt_dir);
            int n = episodes > 0 ? episodes : cfg.eval_episodes;
            uint64_t eval_seed = Rng::derive(cfg.seed, 0xeba1);
            EvalReport rep = evaluate_arm(index, fold, ckpt, seg_mode_from_name(mode_name), shots,
                                          n, cfg.refine, Rng::derive(eval_seed, static_cast<uint64_t>(fold)),
                                          cfg.threads);
            std::string out_path = report_path.empty()
                                       ? g.out_dir + "/reports/eval_fold" + std::to_string(fold) +
                                             "_" + mode_name + ".json"
                                       : report_path;
            fs::create_directories(fs::path(out_path).parent_path());
            std::ofstream os(out_path);
            os << rep.to_json().dump(1) << "\n";
            std::printf("fold %d %s %d-shot mean IoU %.4f (%d episodes) -> %s\n", fold,
                        mode_name.c_str(), shots, rep.mean_iou, rep.episodes, out_path.c_str());
        } else if (inf->parsed()) {
            Checkpoint ckpt = load_checkpoint(ckpt_dir);
            std::ifstream is(episode_path);
            if (!is) throw IoError("cannot read episode file: " + episode_path);
            json ep = json::parse(is);
            std::vector<Image> sup_imgs;
            std::vector<Mask> sup_masks;
            for (const auto& s : ep.at("supports")) {
                sup_imgs.push_back(read_ppm(s.at("image").get<std::string>()));
                sup_masks.push_back(read_pgm_mask(s.at("mask").get<std::string>()));
            }
            Image query = read_ppm(ep.at("query").at("image").get<std::string>());
            RefineConfig rc = cfg.refine;
            if (opt_tau_fg > 0.0f) rc.tau_fg = opt_tau_fg;
            if (opt_tau_bg > 0.0f) rc.tau_bg = opt_tau_bg;
            if (opt_refine_iters >= 0) {
                rc.iterations_1shot = static_cast<int>(opt_refine_iters);
                rc.iterations_kshot = static_cast<int>(opt_refine_iters);
            }
            Mask pred = segment_episode(sup_imgs, sup_masks, query, ckpt.encoder, rc,
                                        seg_mode_from_name(mode_name));
            std::printf("prediction: %lld foreground pixels of %d\n",
                        static_cast<long long>(pred.count_fg()), pred.height * pred.width);
            if (ep.at("query").contains("mask") && !ep.at("query").at("mask").is_null()) {
                Mask gt = read_pgm_mask(ep.at("query").at("mask").get<std::string>());
                MiouAccumulator acc;
                acc.add(pred, gt, 0);
                std::printf("IoU vs ground truth: %.4f\n", acc.class_iou(0));
            }
            if (!overlay_path.empty()) {
                write_ppm(overlay_path, render_overlay(query, pred));
                std::printf("overlay written to %s\n", overlay_path.c_str());
            }
        } else if (ab->parsed()) {
            if (episodes_ab > 0) cfg.eval_episodes = episodes_ab;
            AblationReport rep = run_ablation(index, g.out_dir, cfg, !no_train);
            std::printf("%s", rep.text.c_str());
            std::printf("reports under %s/reports\n", g.out_dir.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
