#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fss/image.hpp"
#include "fss/models.hpp"
#include "fss/optim.hpp"
#include "fss/prototypes.hpp"
#include "fss/pseudo_labels.hpp"

namespace fss {

// Support-mask prototypes (Eq. 7 context): channel means over foreground and
// background cells, pooled jointly over all supports of an episode.
struct MaskPrototypes {
    std::vector<float> p_fg, p_bg;
    int64_t fg_count = 0, bg_count = 0;
};

MaskPrototypes compute_mask_prototypes(const std::vector<const Tensor*>& support_features,
                                       const std::vector<const Mask*>& support_masks_feat_res);
MaskPrototypes compute_mask_prototypes(const Tensor& features, const Mask& mask_feat_res);

// [cos(f, p_bg); cos(f, p_fg)] — background first, foreground second.
std::array<double, 2> paired_similarity(std::span<const float> pixel_feature,
                                        const MaskPrototypes& protos);

struct SegLossResult {
    double loss = 0.0;
    Tensor grad_features;             // into the query feature map
    std::vector<float> grad_p_fg, grad_p_bg;
};

// Per-pixel 2-way softmax over paired similarities / temperature against the
// binary ground truth, mean over pixels. Gradients flow through both cosine
// arguments; prototype gradients are scattered into support features with
// mask_prototypes_backward.
SegLossResult seg_loss(const Tensor& query_features, const MaskPrototypes& protos,
                       const Mask& gt_feat_res, float temperature);

void mask_prototypes_backward(const MaskPrototypes& protos, std::span<const float> grad_p_fg,
                              std::span<const float> grad_p_bg,
                              const std::vector<const Mask*>& support_masks_feat_res,
                              std::vector<Tensor>& grad_support_features);

struct PseudoClsResult {
    double loss = 0.0;
    Tensor grad_logits;  // same shape as logits
};

// Mean pixel-wise cross-entropy of (K,H,W) logits against an H*W label map.
PseudoClsResult pseudo_cls_loss(const Tensor& logits, std::span<const int32_t> labels);

struct LossWeights {
    std::vector<float> gamma = {0.5f, 1.0f, 1.0f};
    float seg_weight = 1.0f;
    void validate() const {
        if (seg_weight <= 0.0f) throw ConfigError("seg_weight must be positive");
        for (float g : gamma)
            if (g <= 0.0f) throw ConfigError("every gamma must be positive");
    }
};

double total_pseudo_loss(std::span<const double> per_level_losses, const LossWeights& weights);

struct TrainConfig {
    int pairs_per_batch = 4;
    int extra_images_per_batch = 16;
    long total_iterations = 300;
    SgdConfig sgd{1e-2f, 0.9f, 1e-4f, 2000, 0.1f};
    uint64_t seed = 0;
    float temperature = 0.05f;  // softmax sharpening for cosine logits
    bool augment_pairs = true;
    bool augment_extras = true;
    int threads = 1;

    void validate() const {
        if (pairs_per_batch < 1) throw ConfigError("pairs_per_batch must be >= 1");
        if (extra_images_per_batch < 0) throw ConfigError("extra_images_per_batch must be >= 0");
        if (total_iterations < 0) throw ConfigError("total_iterations must be >= 0");
        if (temperature <= 0.0f) throw ConfigError("temperature must be positive");
        sgd.validate();
    }
    std::string config_hash() const;
};

struct TrainItem {
    Image image;
    Mask mask;      // annotated class mask (empty object mask allowed, item is then extras-only)
    int class_id = -1;
    std::optional<PseudoLabelStack> pseudo;
};

struct TrainSet {
    std::vector<TrainItem> items;
    int image_h = 0, image_w = 0;
};

struct TrainLog {
    std::vector<double> total;
    std::vector<double> seg;
    std::vector<double> pseudo;
};

// Prototype-matching training on base classes (L_seg only). The returned
// checkpoint is the pretrained encoder used for descriptor extraction and
// pseudo-labeling.
Checkpoint train_baseline(const TrainSet& data, const TrainConfig& config,
                          TrainLog* log = nullptr);

// Joint training: every iteration samples support-query pairs (L_seg) and
// pseudo-labeled extra images (per-level decoders, Σ gamma_l * L_l).
// Decoders are returned in the checkpoint but unused at inference.
Checkpoint train_spfl(const TrainSet& data, const PrototypeHierarchy& hierarchy,
                      const TrainConfig& config, const LossWeights& weights,
                      TrainLog* log = nullptr);

}  // namespace fss
