#pragma once

#include <string>
#include <vector>

#include "fss/image.hpp"
#include "fss/prototypes.hpp"

namespace fss {

// Per-level label maps at feature resolution. Level l's label space is
// fg ids [0, K_fg,l) followed by bg ids [K_fg,l, K_fg,l + K_bg,l).
struct PseudoLabelStack {
    int height = 0, width = 0;                   // feature resolution
    std::vector<std::vector<int32_t>> levels;    // finest first
    std::vector<std::pair<int, int>> label_space;  // (K_fg, K_bg) per level

    int num_levels() const { return static_cast<int>(levels.size()); }
    int label_count(int level) const {
        return label_space[static_cast<size_t>(level)].first +
               label_space[static_cast<size_t>(level)].second;
    }
};

// Nearest-prototype cosine labeling. Foreground cells (majority-downsampled
// mask) use the fg prototypes of each level, background cells the bg
// prototypes with their ids offset by K_fg,l. Ties break to the lowest index.
PseudoLabelStack assign_pseudo_labels(const Tensor& features, const Mask& fg_mask,
                                      const PrototypeHierarchy& hierarchy);

// One FTNS integer tensor per level plus a manifest keyed by image id and
// hierarchy hash.
void save_pseudo_labels(const std::string& dir, int image_id, const PseudoLabelStack& stack,
                        uint64_t hierarchy_hash);
PseudoLabelStack load_pseudo_labels(const std::string& dir, int image_id);

}  // namespace fss
