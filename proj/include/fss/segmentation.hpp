#pragma once

#include <string>
#include <vector>

#include "fss/image.hpp"

namespace fss {

// Partition of an image into appearance-coherent regions. Region ids form a
// contiguous range [0, num_regions); after restrict_to_background, foreground
// pixels carry the sentinel kForeground and are not counted as a region.
struct RegionMap {
    static constexpr int32_t kForeground = -1;

    int height = 0, width = 0;
    std::vector<int32_t> labels;
    int num_regions = 0;

    int32_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
    int32_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
};

struct SegConfig {
    float scale_k = 0.0f;          // 0 = derive from contour_threshold
    int min_region_size = 12;
    float gaussian_sigma = 0.8f;
    float contour_threshold = 0.45f;

    // The paper's contour threshold maps affinely onto the merge scale.
    float effective_k() const { return scale_k > 0.0f ? scale_k : 300.0f * contour_threshold; }
    void validate() const {
        if (min_region_size < 1) throw ConfigError("min_region_size must be >= 1");
        if (gaussian_sigma < 0.0f) throw ConfigError("gaussian_sigma must be nonnegative");
        if (contour_threshold <= 0.0f || contour_threshold >= 1.0f)
            throw ConfigError("contour_threshold must be in (0,1)");
    }
};

// Greedy graph segmentation: 8-connected pixel graph, edge weight = color
// distance after Gaussian smoothing, edges merged in ascending order when the
// weight stays under both components' adaptive thresholds. Components are then
// split into 4-connected pieces and pieces below min_region_size are merged
// into their lowest-weight 4-neighbor. Deterministic for a fixed input.
RegionMap segment_regions(const Image& image, const SegConfig& config);

// Keeps region ids on background pixels only; regions fully covered by the
// foreground are dropped, clipped regions are re-split into 4-connected parts,
// ids renumbered, foreground pixels set to kForeground.
RegionMap restrict_to_background(const RegionMap& regions, const Mask& fg_mask);

// FTNS integer sidecar plus an id-modulo-256 PGM for visual inspection.
void save_region_map(const std::string& base_path, const RegionMap& rm);
RegionMap load_region_map(const std::string& ftns_path);

}  // namespace fss
