#include "fss/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fss {

namespace fs = std::filesystem;
using json = nlohmann::json;

PipelineConfig::PipelineConfig() {
    baseline.total_iterations = 250;
    baseline.sgd = SgdConfig{1e-2f, 0.9f, 1e-4f, 2000, 0.1f};
    spfl.total_iterations = 150;
    spfl.sgd = SgdConfig{1e-2f, 0.9f, 1e-4f, 2000, 0.1f};
}

void PipelineConfig::set_seed(uint64_t s) {
    seed = s;
    dataset.seed = s;
    cluster.seed = Rng::derive(s, 1);
    baseline.seed = Rng::derive(s, 2);
    spfl.seed = Rng::derive(s, 3);
    refine.seed = Rng::derive(s, 4);
}

void PipelineConfig::set_threads(int t) {
    threads = std::max(1, t);
    baseline.threads = threads;
    spfl.threads = threads;
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::apply_json(const json& j) {
    if (j.contains("seed")) set_seed(j.at("seed").get<uint64_t>());
    if (j.contains("threads")) set_threads(j.at("threads").get<int>());
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        maybe(d, "image_size", dataset.image_size);
        maybe(d, "num_classes", dataset.num_classes);
        maybe(d, "images_per_class", dataset.images_per_class);
        maybe(d, "folds", dataset.folds);
        maybe(d, "novel_per_fold", dataset.novel_per_fold);
        maybe(d, "distractor_probability", dataset.distractor_probability);
        maybe(d, "background_cells", dataset.background_cells);
        maybe(d, "noise_level", dataset.noise_level);
    }
    if (j.contains("segmentation")) {
        const json& s = j.at("segmentation");
        maybe(s, "scale_k", seg.scale_k);
        maybe(s, "min_region_size", seg.min_region_size);
        maybe(s, "gaussian_sigma", seg.gaussian_sigma);
        maybe(s, "contour_threshold", seg.contour_threshold);
    }
    if (j.contains("cluster")) {
        const json& c = j.at("cluster");
        if (c.contains("level_sizes")) {
            cluster.level_sizes.clear();
            for (const auto& e : c.at("level_sizes"))
                cluster.level_sizes.push_back({e[0].get<int>(), e[1].get<int>()});
        }
        maybe(c, "max_iters", cluster.max_iters);
        maybe(c, "tol", cluster.tol);
        if (c.contains("preset") && c.at("preset").get<std::string>() == "pascal")
            cluster.level_sizes = ClusterConfig::pascal_preset(cluster.seed).level_sizes;
    }
    auto apply_train = [](const json& t, TrainConfig& cfg) {
        maybe(t, "pairs_per_batch", cfg.pairs_per_batch);
        maybe(t, "extra_images_per_batch", cfg.extra_images_per_batch);
        maybe(t, "total_iterations", cfg.total_iterations);
        maybe(t, "learning_rate", cfg.sgd.learning_rate);
        maybe(t, "momentum", cfg.sgd.momentum);
        maybe(t, "weight_decay", cfg.sgd.weight_decay);
        maybe(t, "decay_every", cfg.sgd.decay_every);
        maybe(t, "decay_factor", cfg.sgd.decay_factor);
        maybe(t, "temperature", cfg.temperature);
        maybe(t, "augment_pairs", cfg.augment_pairs);
        maybe(t, "augment_extras", cfg.augment_extras);
    };
    if (j.contains("baseline")) apply_train(j.at("baseline"), baseline);
    if (j.contains("spfl")) apply_train(j.at("spfl"), spfl);
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        if (w.contains("gamma")) {
            weights.gamma.clear();
            for (const auto& g : w.at("gamma")) weights.gamma.push_back(g.get<float>());
        }
        maybe(w, "seg_weight", weights.seg_weight);
    }
    if (j.contains("refine")) {
        const json& r = j.at("refine");
        maybe(r, "tau_fg", refine.tau_fg);
        maybe(r, "tau_bg", refine.tau_bg);
        maybe(r, "learning_rate", refine.learning_rate);
        maybe(r, "iterations_1shot", refine.iterations_1shot);
        maybe(r, "iterations_kshot", refine.iterations_kshot);
        maybe(r, "max_pixels_per_class", refine.max_pixels_per_class);
        maybe(r, "temperature", refine.temperature);
        maybe(r, "hidden_width", refine.hidden_width);
        maybe(r, "dropout_rate", refine.dropout_rate);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        maybe(e, "episodes", eval_episodes);
        if (e.contains("shots_sweep")) {
            shots_sweep.clear();
            for (const auto& s : e.at("shots_sweep")) shots_sweep.push_back(s.get<int>());
        }
        if (e.contains("tau_fg_grid")) {
            tau_fg_grid.clear();
            for (const auto& s : e.at("tau_fg_grid")) tau_fg_grid.push_back(s.get<float>());
        }
        if (e.contains("tau_bg_grid")) {
            tau_bg_grid.clear();
            for (const auto& s : e.at("tau_bg_grid")) tau_bg_grid.push_back(s.get<float>());
        }
    }
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config file: " + path);
    PipelineConfig cfg;
    cfg.apply_json(json::parse(is));
    return cfg;
}

std::string PipelineConfig::hash() const {
    json j;
    j["dataset"] = dataset.content_hash();
    j["seg"] = {seg.effective_k(), seg.min_region_size, seg.gaussian_sigma};
    json ls = json::array();
    for (auto [a, b] : cluster.level_sizes) ls.push_back({a, b});
    j["cluster"] = ls;
    j["baseline"] = baseline.config_hash();
    j["spfl"] = spfl.config_hash();
    j["gamma"] = weights.gamma;
    j["seg_weight"] = weights.seg_weight;
    j["refine"] = {refine.tau_fg, refine.tau_bg, refine.learning_rate, refine.iterations_1shot,
                   refine.iterations_kshot, refine.max_pixels_per_class, refine.temperature,
                   refine.hidden_width, refine.dropout_rate};
    j["eval_episodes"] = eval_episodes;
    j["seed"] = seed;
    return hex64(fnv1a64(j.dump()));
}

std::string fold_dir(const std::string& work_dir, int fold) {
    return work_dir + "/fold" + std::to_string(fold);
}

namespace {

std::string region_base(const std::string& work_dir, int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%05d", id);
    return work_dir + "/regions/" + buf;
}

TrainSet load_train_set(const DatasetIndex& index, int fold, const std::string& pseudo_dir) {
    TrainSet set;
    set.image_h = index.config.image_size;
    set.image_w = index.config.image_size;
    for (int id : index.train_ids(fold)) {
        TrainItem item;
        item.image = index.load_image(id);
        item.mask = index.load_mask(id);
        item.class_id = index.images[static_cast<size_t>(id)].class_id;
        if (!pseudo_dir.empty()) item.pseudo = load_pseudo_labels(pseudo_dir, id);
        set.items.push_back(std::move(item));
    }
    return set;
}

ClusterConfig single_level_config(const ClusterConfig& full) {
    ClusterConfig c = full;
    c.level_sizes = {full.level_sizes[0]};
    return c;
}

}  // namespace

void segment_all_regions(const DatasetIndex& index, const std::string& work_dir,
                         const SegConfig& seg, int threads) {
    fs::create_directories(work_dir + "/regions");
    int n = static_cast<int>(index.images.size());
    parallel_for(n, threads, [&](int i) {
        int id = index.images[static_cast<size_t>(i)].id;
        std::string base = region_base(work_dir, id);
        if (fs::exists(base + ".ftns")) return;
        Image img = index.load_image(id);
        RegionMap rm = segment_regions(img, seg);
        save_region_map(base, rm);
    });
}

Checkpoint train_baseline_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                               const PipelineConfig& cfg) {
    std::string dir = fold_dir(work_dir, fold) + "/baseline";
    if (checkpoint_exists(dir)) return load_checkpoint(dir);
    TrainConfig tc = cfg.baseline;
    tc.seed = Rng::derive(cfg.baseline.seed, static_cast<uint64_t>(fold));
    TrainSet set = load_train_set(index, fold, "");
    Checkpoint ckpt = train_baseline(set, tc);
    save_checkpoint(dir, ckpt);
    return ckpt;
}

void build_prototypes_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                           const PipelineConfig& cfg) {
    std::string dir = fold_dir(work_dir, fold) + "/prototypes";
    if (fs::exists(dir + "/manifest.json")) return;
    Checkpoint baseline = load_checkpoint(fold_dir(work_dir, fold) + "/baseline");

    std::vector<int> ids = index.train_ids(fold);
    int n = static_cast<int>(ids.size());
    std::vector<RegionCorpus> partial(static_cast<size_t>(n));
    parallel_for(n, cfg.threads, [&](int i) {
        int id = ids[static_cast<size_t>(i)];
        Image img = index.load_image(id);
        Mask mask = index.load_mask(id);
        RegionMap rm = load_region_map(region_base(work_dir, id) + ".ftns");
        RegionMap bg = restrict_to_background(rm, mask);
        Network::Ctx ctx;
        Tensor feat = baseline.encoder.forward(image_to_tensor(img), ctx, Mode::Eval);
        extract_region_descriptors(feat, bg, mask, id, partial[static_cast<size_t>(i)]);
    });
    RegionCorpus corpus;
    for (auto& p : partial) {
        corpus.skipped_empty += p.skipped_empty;
        for (auto& d : p.fg) corpus.fg.push_back(std::move(d));
        for (auto& d : p.bg) corpus.bg.push_back(std::move(d));
    }

    ClusterConfig cc = cfg.cluster;
    cc.seed = Rng::derive(cfg.cluster.seed, static_cast<uint64_t>(fold));
    PrototypeHierarchy hierarchy = build_hierarchy(corpus, cc);
    hierarchy.encoder_hash = hex64(baseline.param_hash());
    save_hierarchy(dir, hierarchy);
}

void pseudo_label_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                       const PipelineConfig& cfg) {
    std::string dir = fold_dir(work_dir, fold) + "/pseudo";
    std::string done_marker = dir + "/.complete";
    if (fs::exists(done_marker)) return;
    fs::create_directories(dir);
    Checkpoint baseline = load_checkpoint(fold_dir(work_dir, fold) + "/baseline");
    PrototypeHierarchy hierarchy = load_hierarchy(fold_dir(work_dir, fold) + "/prototypes");
    uint64_t hhash = hierarchy.content_hash();

    std::vector<int> ids = index.train_ids(fold);
    parallel_for(static_cast<int>(ids.size()), cfg.threads, [&](int i) {
        int id = ids[static_cast<size_t>(i)];
        Image img = index.load_image(id);
        Mask mask = index.load_mask(id);
        Network::Ctx ctx;
        Tensor feat = baseline.encoder.forward(image_to_tensor(img), ctx, Mode::Eval);
        PseudoLabelStack stack = assign_pseudo_labels(feat, mask, hierarchy);
        save_pseudo_labels(dir, id, stack, hhash);
    });
    std::ofstream(done_marker) << "ok\n";
}

Checkpoint train_spfl_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                           const PipelineConfig& cfg, bool single_level) {
    std::string dir = fold_dir(work_dir, fold) + (single_level ? "/spfl_single" : "/spfl_hier");
    if (checkpoint_exists(dir)) return load_checkpoint(dir);

    PrototypeHierarchy hierarchy = load_hierarchy(fold_dir(work_dir, fold) + "/prototypes");
    LossWeights weights = cfg.weights;
    if (single_level) {
        hierarchy.levels.resize(1);
        weights.gamma = {1.0f};
    }
    TrainSet set = load_train_set(index, fold, fold_dir(work_dir, fold) + "/pseudo");
    if (single_level)
        for (auto& item : set.items) {
            item.pseudo->levels.resize(1);
            item.pseudo->label_space.resize(1);
        }

    TrainConfig tc = cfg.spfl;
    tc.seed = Rng::derive(cfg.spfl.seed, static_cast<uint64_t>(fold) * 2 + (single_level ? 1 : 0));
    Checkpoint ckpt = train_spfl(set, hierarchy, tc, weights);
    save_checkpoint(dir, ckpt);
    return ckpt;
}

void prepare_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                  const PipelineConfig& cfg) {
    segment_all_regions(index, work_dir, cfg.seg, cfg.threads);
    train_baseline_fold(index, work_dir, fold, cfg);
    build_prototypes_fold(index, work_dir, fold, cfg);
    pseudo_label_fold(index, work_dir, fold, cfg);
    train_spfl_fold(index, work_dir, fold, cfg, false);
    train_spfl_fold(index, work_dir, fold, cfg, true);
}

namespace {

struct ArmKey {
    std::string encoder;  // baseline | spfl_single | spfl_hier
    SegMode mode;
};

const char* encoder_dir(const std::string& enc) {
    if (enc == "baseline") return "/baseline";
    if (enc == "spfl_single") return "/spfl_single";
    if (enc == "spfl_hier") return "/spfl_hier";
    throw ConfigError("unknown encoder arm: " + enc);
}

}  // namespace

AblationReport run_ablation(const DatasetIndex& index, const std::string& work_dir,
                            const PipelineConfig& cfg, bool train_if_missing) {
    auto t0 = std::chrono::steady_clock::now();
    int folds = index.config.folds;
    if (train_if_missing)
        for (int f = 0; f < folds; ++f) prepare_fold(index, work_dir, f, cfg);

    const std::vector<std::string> encoders = {"baseline", "spfl_single", "spfl_hier"};
    const std::vector<SegMode> modes = {SegMode::Matching, SegMode::SrofbSupportOnly,
                                        SegMode::SrofbSelfRefined};
    uint64_t eval_seed = Rng::derive(cfg.seed, 0xeba1);

    json arms = json::array();
    std::vector<std::vector<double>> arm_fold_miou;  // [arm][fold]
    std::vector<std::string> arm_names;
    for (const auto& enc : encoders) {
        for (SegMode mode : modes) {
            std::vector<double> fold_miou;
            json fold_reports = json::array();
            for (int f = 0; f < folds; ++f) {
                Checkpoint ckpt = load_checkpoint(fold_dir(work_dir, f) + encoder_dir(enc));
                EvalReport rep = evaluate_arm(index, f, ckpt, mode, 1, cfg.eval_episodes,
                                              cfg.refine, Rng::derive(eval_seed, static_cast<uint64_t>(f)),
                                              cfg.threads);
                fold_miou.push_back(rep.mean_iou);
                json jr = rep.to_json();
                jr.erase("wall_seconds");
                fold_reports.push_back(jr);
            }
            double mean = 0.0;
            for (double v : fold_miou) mean += v;
            mean /= static_cast<double>(folds);
            json arm;
            arm["encoder"] = enc;
            arm["mode"] = seg_mode_name(mode);
            arm["per_fold_miou"] = fold_miou;
            arm["mean_miou"] = mean;
            arm["fold_reports"] = fold_reports;
            arms.push_back(arm);
            arm_fold_miou.push_back(fold_miou);
            arm_names.push_back(enc + "+" + seg_mode_name(mode));
        }
    }

    // shots sweep, fold 0, spfl_hier encoder
    json shots = json::array();
    {
        Checkpoint ckpt = load_checkpoint(fold_dir(work_dir, 0) + "/spfl_hier");
        for (int k : cfg.shots_sweep) {
            json row;
            row["k_shot"] = k;
            for (SegMode mode : {SegMode::Matching, SegMode::SrofbSelfRefined}) {
                EvalReport rep = evaluate_arm(index, 0, ckpt, mode, k, cfg.eval_episodes,
                                              cfg.refine, Rng::derive(eval_seed, 0x500 + static_cast<uint64_t>(k)),
                                              cfg.threads);
                row[seg_mode_name(mode)] = rep.mean_iou;
            }
            shots.push_back(row);
        }
    }

    // threshold grid, fold 0, spfl_hier encoder, self-refined mode
    json tau_grid = json::array();
    {
        Checkpoint ckpt = load_checkpoint(fold_dir(work_dir, 0) + "/spfl_hier");
        for (float tfg : cfg.tau_fg_grid) {
            for (float tbg : cfg.tau_bg_grid) {
                RefineConfig rc = cfg.refine;
                rc.tau_fg = tfg;
                rc.tau_bg = tbg;
                EvalReport rep = evaluate_arm(index, 0, ckpt, SegMode::SrofbSelfRefined, 1,
                                              cfg.eval_episodes, rc,
                                              Rng::derive(eval_seed, 0x7a0), cfg.threads);
                json row;
                row["tau_fg"] = tfg;
                row["tau_bg"] = tbg;
                row["mean_iou"] = rep.mean_iou;
                tau_grid.push_back(row);
            }
        }
    }

    json report;
    report["dataset_hash"] = hex64(index.content_hash());
    report["config_hash"] = cfg.hash();
    report["seed"] = cfg.seed;
    report["episodes_per_fold"] = cfg.eval_episodes;
    report["arms"] = arms;
    report["shots_sweep"] = shots;
    report["tau_grid"] = tau_grid;
    // published reference points for the corresponding full-scale experiment
    report["paper_reference"] = {{"baseline_mean", 57.8},
                                 {"spfl_mean", 61.6},
                                 {"spfl_srofb_mean", 63.7}};
    report["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // aligned-column text table
    std::string text;
    {
        char line[256];
        std::snprintf(line, sizeof(line), "%-24s", "arm");
        text += line;
        for (int f = 0; f < folds; ++f) {
            std::snprintf(line, sizeof(line), " fold%-3d", f);
            text += line;
        }
        text += "  mean\n";
        for (size_t a = 0; a < arm_names.size(); ++a) {
            std::snprintf(line, sizeof(line), "%-24s", arm_names[a].c_str());
            text += line;
            double mean = 0.0;
            for (int f = 0; f < folds; ++f) {
                std::snprintf(line, sizeof(line), " %6.2f ", 100.0 * arm_fold_miou[a][static_cast<size_t>(f)]);
                text += line;
                mean += arm_fold_miou[a][static_cast<size_t>(f)];
            }
            std::snprintf(line, sizeof(line), " %6.2f\n", 100.0 * mean / folds);
            text += line;
        }
    }

    fs::create_directories(work_dir + "/reports");
    {
        std::ofstream os(work_dir + "/reports/ablation.json");
        if (!os) throw IoError("cannot write ablation report");
        os << report.dump(1) << "\n";
    }
    {
        std::ofstream os(work_dir + "/reports/ablation.txt");
        os << text;
    }
    AblationReport out;
    out.data = std::move(report);
    out.text = std::move(text);
    return out;
}

}  // namespace fss
