#pragma once

#include <string>
#include <vector>

#include "fss/spfl.hpp"

namespace fss {

// Two MLP layers with ReLU and dropout in between, single sigmoid output,
// trained per episode with binary cross-entropy.
struct OFBClassifier {
    Network net;
    int in_channels = 0;

    static OFBClassifier make(int in_channels, int hidden, float dropout_rate, Rng& rng);

    // Sigmoid scores for N feature vectors (N,C). Eval mode is deterministic.
    std::vector<float> score(const Tensor& features_nc, Mode mode, Rng* rng = nullptr,
                             Network::Ctx* ctx_out = nullptr) const;
};

struct RefineConfig {
    float tau_fg = 0.7f;
    float tau_bg = 0.6f;
    float learning_rate = 0.1f;
    int iterations_1shot = 10;
    int iterations_kshot = 100;
    int max_pixels_per_class = 256;
    float temperature = 0.05f;  // shared with rough segmentation
    int hidden_width = 128;
    float dropout_rate = 0.1f;
    uint64_t seed = 0;

    void validate() const {
        if (tau_fg <= 0.0f || tau_fg >= 1.0f || tau_bg <= 0.0f || tau_bg >= 1.0f)
            throw ConfigError("thresholds must be in (0,1)");
        if (learning_rate <= 0.0f) throw ConfigError("learning_rate must be positive");
        if (iterations_1shot < 0 || iterations_kshot < 0)
            throw ConfigError("iteration counts must be nonnegative");
        if (max_pixels_per_class < 1) throw ConfigError("max_pixels_per_class must be >= 1");
        if (temperature <= 0.0f) throw ConfigError("temperature must be positive");
        if (hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
        if (dropout_rate < 0.0f || dropout_rate >= 1.0f)
            throw ConfigError("dropout_rate must be in [0,1)");
    }
};

struct PixelSampleSet {
    std::vector<std::vector<float>> positives;
    std::vector<std::vector<float>> negatives;
    std::vector<uint8_t> positive_from_query;  // origin tags, aligned with the lists
    std::vector<uint8_t> negative_from_query;

    void append(const PixelSampleSet& other);
};

struct HarvestCounts {
    int fg_above_threshold = 0;
    int bg_above_threshold = 0;
    int positives_kept = 0;
    int negatives_kept = 0;
};

// Matching scores (2,h,w): per-pixel softmax of the paired similarities over
// temperature; channel 0 background, channel 1 foreground.
Tensor rough_segment(const Tensor& query_features, const MaskPrototypes& protos,
                     float temperature);

// Query pixels with fg score > tau_fg become positives, bg score > tau_bg
// negatives, each side capped at max_pixels_per_class in descending score
// order (ties to the lower pixel index).
PixelSampleSet select_confident_pixels(const Tensor& score_map, const Tensor& query_features,
                                       const RefineConfig& config,
                                       HarvestCounts* counts = nullptr);

// All foreground cells of all supports as positives, background cells as
// negatives, each side subsampled uniformly at random to the cap.
PixelSampleSet gather_support_pixels(const std::vector<const Tensor*>& support_features,
                                     const std::vector<const Mask*>& support_masks_feat_res,
                                     const RefineConfig& config);

// Seeded-random init, class-balanced full-batch SGD steps with BCE; dropout
// active. iterations chosen by the caller (1-shot vs k-shot schedule).
OFBClassifier refine_classifier(const PixelSampleSet& samples, const RefineConfig& config,
                                int in_channels, int iterations);

// Dropout disabled; per-cell sigmoid scores bilinearly upsampled to image
// resolution and thresholded at 0.5 (ties go to background).
Mask predict_mask(const OFBClassifier& classifier, const Tensor& query_features, int image_h,
                  int image_w);

enum class SegMode { Matching, SrofbSupportOnly, SrofbSelfRefined };

const char* seg_mode_name(SegMode m);
SegMode seg_mode_from_name(const std::string& name);

// End-to-end inference for one episode against a frozen encoder.
// Falls back from self-refined to support-only samples when a harvested class
// comes out empty, and to thresholded rough matching when the supports are
// degenerate too.
Mask segment_episode(const std::vector<Image>& support_images,
                     const std::vector<Mask>& support_masks, const Image& query_image,
                     const Encoder& encoder, const RefineConfig& config, SegMode mode);

}  // namespace fss
