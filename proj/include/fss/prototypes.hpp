#pragma once

#include <string>
#include <vector>

#include "fss/segmentation.hpp"
#include "fss/tensor.hpp"

namespace fss {

// L2-normalized mask-average-pooled feature of one region.
struct RegionDescriptor {
    std::vector<float> vector;
    int image_id = -1;
    int region_id = -1;   // -1 for foreground-class descriptors
    bool foreground = false;
    int pixel_count = 0;  // aligned feature cells pooled
};

struct RegionCorpus {
    std::vector<RegionDescriptor> fg;
    std::vector<RegionDescriptor> bg;
    int skipped_empty = 0;  // regions with no aligned cells or zero norm
};

struct ClusterConfig {
    std::vector<std::pair<int, int>> level_sizes;  // (K_fg, K_bg) per level, finest first
    int max_iters = 100;
    float tol = 1e-6f;
    uint64_t seed = 0;

    void validate() const;
    // Desk-scale default: (8,12) -> (4,6) -> (2,3).
    static ClusterConfig desk_default(uint64_t seed);
    // PASCAL-style preset {50,25,15} split per level into fg/bg.
    static ClusterConfig pascal_preset(uint64_t seed);
};

struct KmeansResult {
    std::vector<std::vector<float>> centers;  // unit-normalized after convergence
    std::vector<int> assignments;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // one entry per assignment pass
    int iterations = 0;
};

// Lloyd iterations with k-means++ seeding. Runs until the assignment is a
// fixed point (or max_iters); empty clusters are reseeded to the point
// farthest from its current center. Centers are unit-normalized only after
// convergence so the trace stays a plain Euclidean k-means descent.
KmeansResult kmeans(const std::vector<std::vector<float>>& points, int k,
                    const ClusterConfig& config, uint64_t seed_salt = 0);

struct PrototypeHierarchy {
    struct Level {
        std::vector<std::vector<float>> fg;  // each unit-norm, length C
        std::vector<std::vector<float>> bg;
    };
    std::vector<Level> levels;  // finest first
    uint64_t seed = 0;
    std::string encoder_hash;

    int num_levels() const { return static_cast<int>(levels.size()); }
    int fg_count(int level) const { return static_cast<int>(levels[static_cast<size_t>(level)].fg.size()); }
    int bg_count(int level) const { return static_cast<int>(levels[static_cast<size_t>(level)].bg.size()); }
    int label_count(int level) const { return fg_count(level) + bg_count(level); }
    int channels() const;
    uint64_t content_hash() const;
};

// One descriptor per background region with at least one aligned feature
// cell, plus one foreground descriptor per annotated mask. `regions` and
// `fg_mask` live at image resolution and are aligned to the feature grid by
// nearest-neighbor / majority-vote downsampling.
void extract_region_descriptors(const Tensor& features, const RegionMap& regions,
                                const Mask& fg_mask, int image_id, RegionCorpus& corpus);

// Level 1 clusters raw descriptors; level l>1 clusters level l-1 prototypes.
// fg and bg hierarchies never mix.
PrototypeHierarchy build_hierarchy(const RegionCorpus& corpus, const ClusterConfig& config);

void save_hierarchy(const std::string& dir, const PrototypeHierarchy& h);
PrototypeHierarchy load_hierarchy(const std::string& dir);

}  // namespace fss
