#include "fss/pseudo_labels.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fss/losses.hpp"

namespace fss {

PseudoLabelStack assign_pseudo_labels(const Tensor& features, const Mask& fg_mask,
                                      const PrototypeHierarchy& hierarchy) {
    if (features.ndim() != 3) throw DimensionError("assign_pseudo_labels: features (C,H,W)");
    int C = features.dim(0), h = features.dim(1), w = features.dim(2);
    if (hierarchy.channels() != C)
        throw DimensionError("assign_pseudo_labels: hierarchy channel mismatch");

    Mask ds_fg = majority_downsample(fg_mask, h, w);

    PseudoLabelStack stack;
    stack.height = h;
    stack.width = w;

    // Cosine argmax per cell. Features are compared against unit prototypes,
    // so the cell norm divides out of the argmax and only the dot matters.
    std::vector<float> cell(static_cast<size_t>(C));
    for (int l = 0; l < hierarchy.num_levels(); ++l) {
        const auto& level = hierarchy.levels[static_cast<size_t>(l)];
        stack.label_space.push_back({static_cast<int>(level.fg.size()),
                                     static_cast<int>(level.bg.size())});
        std::vector<int32_t> labels(static_cast<size_t>(h) * w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < C; ++c) cell[static_cast<size_t>(c)] = features.at(c, y, x);
                const auto& protos = ds_fg.at(y, x) ? level.fg : level.bg;
                double best = -2.0;
                int bi = 0;
                for (size_t p = 0; p < protos.size(); ++p) {
                    double cos = cosine_similarity(cell, protos[p]);
                    if (cos > best) {
                        best = cos;
                        bi = static_cast<int>(p);
                    }
                }
                int32_t label = ds_fg.at(y, x)
                                    ? bi
                                    : bi + static_cast<int32_t>(level.fg.size());
                labels[static_cast<size_t>(y) * w + x] = label;
            }
        }
        stack.levels.push_back(std::move(labels));
    }
    return stack;
}

void save_pseudo_labels(const std::string& dir, int image_id, const PseudoLabelStack& stack,
                        uint64_t hierarchy_hash) {
    std::filesystem::create_directories(dir);
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "img_%05d", image_id);
    for (int l = 0; l < stack.num_levels(); ++l)
        save_ftns_i32(dir + "/" + idbuf + ".level" + std::to_string(l) + ".ftns",
                      {stack.height, stack.width}, stack.levels[static_cast<size_t>(l)]);

    nlohmann::json meta;
    meta["image_id"] = image_id;
    meta["levels"] = stack.num_levels();
    meta["hierarchy_hash"] = hex64(hierarchy_hash);
    nlohmann::json space = nlohmann::json::array();
    for (auto [kf, kb] : stack.label_space) space.push_back({kf, kb});
    meta["label_space"] = space;
    std::ofstream os(dir + "/" + idbuf + ".json");
    if (!os) throw IoError("cannot write pseudo-label manifest in " + dir);
    os << meta.dump(2) << "\n";
}

PseudoLabelStack load_pseudo_labels(const std::string& dir, int image_id) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "img_%05d", image_id);
    std::ifstream is(dir + "/" + idbuf + ".json");
    if (!is) throw DataError("missing pseudo labels for image " + std::to_string(image_id));
    nlohmann::json meta = nlohmann::json::parse(is);

    PseudoLabelStack stack;
    int levels = meta["levels"].get<int>();
    for (auto& e : meta["label_space"])
        stack.label_space.push_back({e[0].get<int>(), e[1].get<int>()});
    for (int l = 0; l < levels; ++l) {
        std::vector<int> shape;
        std::vector<int32_t> data;
        load_ftns_i32(dir + "/" + idbuf + ".level" + std::to_string(l) + ".ftns", shape, data);
        stack.height = shape[0];
        stack.width = shape[1];
        stack.levels.push_back(std::move(data));
    }
    return stack;
}

}  // namespace fss
