#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fss/dataset.hpp"
#include "fss/models.hpp"
#include "fss/srofb.hpp"

namespace fss {

// Count-sum mIoU: intersections and unions accumulate per class across
// episodes and divide once at the end (not an average of per-episode IoUs).
struct MiouAccumulator {
    std::map<int, std::pair<int64_t, int64_t>> sums;  // class -> (sum I, sum U)
    int skipped_zero_union = 0;

    void add(const Mask& pred, const Mask& gt, int class_id);
    double mean_iou() const;  // mean over classes seen
    double class_iou(int class_id) const;
};

struct EvalReport {
    std::string convention = "count-sum";
    int fold = -1;
    int k_shot = 1;
    std::string mode;
    std::string encoder_kind;
    uint64_t seed = 0;
    int episodes = 0;
    int skipped_zero_union = 0;
    std::vector<std::tuple<int, int64_t, int64_t>> per_class;  // class, sum I, sum U
    double mean_iou = 0.0;
    std::string checkpoint_hash;
    std::string dataset_hash;
    std::string config_hash;
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

// Spec-level operation: aligned (pred, gt, class) triples to a report.
EvalReport compute_miou(const std::vector<Mask>& predictions,
                        const std::vector<Mask>& ground_truths,
                        const std::vector<int>& class_ids);

// Runs every episode of the suite through segment_episode against a frozen
// encoder. Episodes are independent and may fan out over worker threads; the
// accumulation order is fixed by episode index.
EvalReport evaluate_arm(const DatasetIndex& index, int fold, const Checkpoint& ckpt, SegMode mode,
                        int k_shot, int n_episodes, const RefineConfig& refine, uint64_t seed,
                        int threads);

}  // namespace fss
