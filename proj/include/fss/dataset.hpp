#pragma once

#include <string>
#include <vector>

#include "fss/image.hpp"

namespace fss {

struct SyntheticDatasetConfig {
    int image_size = 64;
    int num_classes = 8;
    int images_per_class = 200;
    int folds = 4;
    int novel_per_fold = 2;
    float distractor_probability = 0.5f;
    int background_cells = 12;   // Voronoi patches per background
    float noise_level = 0.02f;
    uint64_t seed = 0;

    void validate() const {
        if (image_size < 16) throw ConfigError("image_size must be >= 16");
        if (num_classes < 2 || num_classes > 8) throw ConfigError("num_classes must be in [2,8]");
        if (images_per_class < 2) throw ConfigError("images_per_class must be >= 2");
        if (folds < 1 || folds * novel_per_fold > num_classes)
            throw ConfigError("folds x novel_per_fold must not exceed num_classes");
        if (distractor_probability < 0.0f || distractor_probability > 1.0f)
            throw ConfigError("distractor_probability must be in [0,1]");
    }
    uint64_t content_hash() const;
};

extern const char* const kClassNames[8];  // circle, square, triangle, ring, cross, star, bar, ellipse

struct DatasetImageInfo {
    int id = -1;
    std::string image_path;       // relative to the dataset root
    std::string mask_path;
    int class_id = -1;
    int distractor_class = -1;    // -1 = none; mask stored for diagnostics only
    std::string distractor_mask_path;
};

struct DatasetIndex {
    std::string root;
    SyntheticDatasetConfig config;
    std::vector<DatasetImageInfo> images;
    std::vector<std::vector<int>> fold_novel_classes;

    std::vector<int> images_of_class(int class_id) const;
    std::vector<int> train_ids(int fold) const;  // class not novel in this fold
    bool is_novel(int fold, int class_id) const;
    Image load_image(int id) const;
    Mask load_mask(int id) const;
    Mask load_distractor_mask(int id) const;  // empty mask if none
    uint64_t content_hash() const { return config.content_hash(); }
};

// Procedurally renders the shape/texture classes over patchy backgrounds,
// writes PPM images, PGM masks, diagnostic distractor masks, and index.json.
// Byte-identical for a fixed config.
void generate_synthetic_dataset(const SyntheticDatasetConfig& config, const std::string& out_dir);

DatasetIndex load_dataset_index(const std::string& dir);

struct Episode {
    int class_id = -1;
    std::vector<int> support_ids;
    int query_id = -1;
};

// Uniform novel class per episode, then k_shot supports plus one disjoint
// query sampled from that class's images.
std::vector<Episode> sample_episodes(const DatasetIndex& index, int fold, int k_shot,
                                     int n_episodes, uint64_t seed);

}  // namespace fss
