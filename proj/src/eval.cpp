#include "fss/eval.hpp"

#include <chrono>

namespace fss {

void MiouAccumulator::add(const Mask& pred, const Mask& gt, int class_id) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw DimensionError("miou: prediction/ground-truth shape mismatch");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    if (uni == 0) {
        ++skipped_zero_union;
        return;
    }
    auto& s = sums[class_id];
    s.first += inter;
    s.second += uni;
}

double MiouAccumulator::mean_iou() const {
    if (sums.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [c, s] : sums) {
        (void)c;
        total += s.second > 0 ? static_cast<double>(s.first) / static_cast<double>(s.second) : 0.0;
    }
    return total / static_cast<double>(sums.size());
}

double MiouAccumulator::class_iou(int class_id) const {
    auto it = sums.find(class_id);
    if (it == sums.end() || it->second.second == 0) return 0.0;
    return static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["convention"] = convention;
    j["fold"] = fold;
    j["k_shot"] = k_shot;
    j["mode"] = mode;
    j["encoder_kind"] = encoder_kind;
    j["seed"] = seed;
    j["episodes"] = episodes;
    j["skipped_zero_union"] = skipped_zero_union;
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& [c, inter, uni] : per_class) {
        nlohmann::json e;
        e["class_id"] = c;
        e["intersection"] = inter;
        e["union"] = uni;
        e["iou"] = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
        pc.push_back(e);
    }
    j["per_class"] = pc;
    j["mean_iou"] = mean_iou;
    j["checkpoint_hash"] = checkpoint_hash;
    j["dataset_hash"] = dataset_hash;
    j["config_hash"] = config_hash;
    j["wall_seconds"] = wall_seconds;
    return j;
}

EvalReport compute_miou(const std::vector<Mask>& predictions,
                        const std::vector<Mask>& ground_truths,
                        const std::vector<int>& class_ids) {
    if (predictions.size() != ground_truths.size() || predictions.size() != class_ids.size())
        throw DimensionError("compute_miou: list lengths differ");
    MiouAccumulator acc;
    for (size_t i = 0; i < predictions.size(); ++i)
        acc.add(predictions[i], ground_truths[i], class_ids[i]);
    EvalReport report;
    report.episodes = static_cast<int>(predictions.size());
    report.skipped_zero_union = acc.skipped_zero_union;
    for (const auto& [c, s] : acc.sums) report.per_class.push_back({c, s.first, s.second});
    report.mean_iou = acc.mean_iou();
    return report;
}

EvalReport evaluate_arm(const DatasetIndex& index, int fold, const Checkpoint& ckpt, SegMode mode,
                        int k_shot, int n_episodes, const RefineConfig& refine, uint64_t seed,
                        int threads) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<Episode> episodes = sample_episodes(index, fold, k_shot, n_episodes, seed);

    struct EpisodeOut {
        Mask pred, gt;
        int class_id = -1;
    };
    std::vector<EpisodeOut> outs(episodes.size());
    parallel_for(static_cast<int>(episodes.size()), threads, [&](int e) {
        const Episode& ep = episodes[static_cast<size_t>(e)];
        std::vector<Image> sup_imgs;
        std::vector<Mask> sup_masks;
        for (int id : ep.support_ids) {
            sup_imgs.push_back(index.load_image(id));
            sup_masks.push_back(index.load_mask(id));
        }
        Image query = index.load_image(ep.query_id);
        RefineConfig cfg = refine;
        cfg.seed = Rng::derive(seed, 0xe9a1 + static_cast<uint64_t>(e));
        EpisodeOut& out = outs[static_cast<size_t>(e)];
        out.pred = segment_episode(sup_imgs, sup_masks, query, ckpt.encoder, cfg, mode);
        out.gt = index.load_mask(ep.query_id);
        out.class_id = ep.class_id;
    });

    MiouAccumulator acc;
    for (const auto& o : outs) acc.add(o.pred, o.gt, o.class_id);

    EvalReport report;
    report.fold = fold;
    report.k_shot = k_shot;
    report.mode = seg_mode_name(mode);
    report.encoder_kind = ckpt.kind;
    report.seed = seed;
    report.episodes = static_cast<int>(episodes.size());
    report.skipped_zero_union = acc.skipped_zero_union;
    for (const auto& [c, s] : acc.sums) report.per_class.push_back({c, s.first, s.second});
    report.mean_iou = acc.mean_iou();
    report.checkpoint_hash = hex64(ckpt.param_hash());
    report.dataset_hash = hex64(index.content_hash());
    report.config_hash = ckpt.config_hash;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace fss
