#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fss/eval.hpp"
#include "fss/pseudo_labels.hpp"
#include "fss/segmentation.hpp"
#include "fss/spfl.hpp"

namespace fss {

// One bag of knobs for the whole chain; every CLI step reads its slice.
// JSON config files override individual fields.
struct PipelineConfig {
    SyntheticDatasetConfig dataset;
    SegConfig seg;
    ClusterConfig cluster = ClusterConfig::desk_default(0);
    TrainConfig baseline;
    TrainConfig spfl;
    LossWeights weights;
    RefineConfig refine;
    int eval_episodes = 100;
    std::vector<int> shots_sweep = {1, 2, 5, 10};
    std::vector<float> tau_fg_grid = {0.6f, 0.7f, 0.8f, 0.9f};
    std::vector<float> tau_bg_grid = {0.55f, 0.6f, 0.7f};
    int threads = 1;
    uint64_t seed = 0;

    PipelineConfig();
    void set_seed(uint64_t s);
    void set_threads(int t);
    void apply_json(const nlohmann::json& j);
    static PipelineConfig from_json_file(const std::string& path);
    std::string hash() const;
};

// Artifact layout under the work directory:
//   regions/img_XXXXX.{ftns,pgm}      shared across folds
//   fold<F>/baseline/                 pretrained encoder checkpoint
//   fold<F>/prototypes/               hierarchy tensors + manifest
//   fold<F>/pseudo/                   per-image label stacks
//   fold<F>/spfl_hier/  spfl_single/  SPFL checkpoints
//   reports/
std::string fold_dir(const std::string& work_dir, int fold);

void segment_all_regions(const DatasetIndex& index, const std::string& work_dir,
                         const SegConfig& seg, int threads);

Checkpoint train_baseline_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                               const PipelineConfig& cfg);

void build_prototypes_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                           const PipelineConfig& cfg);

void pseudo_label_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                       const PipelineConfig& cfg);

Checkpoint train_spfl_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                           const PipelineConfig& cfg, bool single_level);

// Ensures every artifact for the fold exists (training anything missing).
void prepare_fold(const DatasetIndex& index, const std::string& work_dir, int fold,
                  const PipelineConfig& cfg);

struct AblationReport {
    nlohmann::json data;
    std::string text;
};

// Evaluates {baseline, spfl_single_level, spfl_hierarchy} x {matching, srofb,
// srofb-self} per fold on a shared episode suite, plus a shots sweep and a
// tau_fg/tau_bg grid on fold 0. Writes reports/ablation.json and .txt.
AblationReport run_ablation(const DatasetIndex& index, const std::string& work_dir,
                            const PipelineConfig& cfg, bool train_if_missing);

}  // namespace fss
