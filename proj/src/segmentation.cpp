#include "fss/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fss {

namespace {

struct UnionFind {
    std::vector<int32_t> parent;
    std::vector<int32_t> size;

    explicit UnionFind(int n) : parent(n), size(n, 1) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int32_t find(int32_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    int32_t join(int32_t a, int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return a;
        if (size[a] < size[b]) std::swap(a, b);
        parent[b] = a;
        size[a] += size[b];
        return a;
    }
};

struct Edge {
    int32_t a, b;
    float w;
};

// Separable Gaussian blur with clamp-to-edge borders; one channel.
std::vector<float> gaussian_blur(const std::vector<float>& src, int h, int w, float sigma) {
    if (sigma <= 0.0f) return src;
    int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
    std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
    float sum = 0.0f;
    for (int i = -radius; i <= radius; ++i) {
        float v = std::exp(-0.5f * i * i / (sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : kernel) v /= sum;
    std::vector<float> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                int xx = std::clamp(x + i, 0, w - 1);
                acc += kernel[static_cast<size_t>(i + radius)] *
                       src[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                int yy = std::clamp(y + i, 0, h - 1);
                acc += kernel[static_cast<size_t>(i + radius)] *
                       tmp[static_cast<size_t>(yy) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    return out;
}

// Relabels 4-connected components of equal values into contiguous ids in
// raster order of first occurrence. `mask_fg` pixels (value < 0) are skipped.
RegionMap relabel_4connected(int h, int w, const std::vector<int32_t>& comp) {
    RegionMap rm;
    rm.height = h;
    rm.width = w;
    rm.labels.assign(static_cast<size_t>(h) * w, RegionMap::kForeground);
    int next = 0;
    std::vector<int32_t> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            size_t idx = static_cast<size_t>(y) * w + x;
            if (comp[idx] < 0 || rm.labels[idx] != RegionMap::kForeground) continue;
            int32_t key = comp[idx];
            rm.labels[idx] = next;
            stack.assign(1, static_cast<int32_t>(idx));
            while (!stack.empty()) {
                int32_t cur = stack.back();
                stack.pop_back();
                int cy = cur / w, cx = cur % w;
                const int dy[4] = {-1, 1, 0, 0};
                const int dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    int ny = cy + dy[d], nx = cx + dx[d];
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    size_t nidx = static_cast<size_t>(ny) * w + nx;
                    if (comp[nidx] != key || rm.labels[nidx] != RegionMap::kForeground) continue;
                    rm.labels[nidx] = next;
                    stack.push_back(static_cast<int32_t>(nidx));
                }
            }
            ++next;
        }
    }
    rm.num_regions = next;
    return rm;
}

}  // namespace

RegionMap segment_regions(const Image& image, const SegConfig& config) {
    config.validate();
    int h = image.height, w = image.width;
    if (h < 1 || w < 1) throw DimensionError("segment_regions: empty image");
    int n = h * w;
    if (n == 1) {
        RegionMap rm;
        rm.height = h;
        rm.width = w;
        rm.labels = {0};
        rm.num_regions = 1;
        return rm;
    }

    // Smooth each channel; weights computed on the 0..255 scale the merge
    // constant is calibrated against.
    std::vector<float> ch[3];
    for (int c = 0; c < 3; ++c) {
        ch[c].resize(static_cast<size_t>(n));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                ch[c][static_cast<size_t>(y) * w + x] = image.at(y, x, c) * 255.0f;
        ch[c] = gaussian_blur(ch[c], h, w, config.gaussian_sigma);
    }
    auto color_dist = [&](int ia, int ib) {
        float d0 = ch[0][static_cast<size_t>(ia)] - ch[0][static_cast<size_t>(ib)];
        float d1 = ch[1][static_cast<size_t>(ia)] - ch[1][static_cast<size_t>(ib)];
        float d2 = ch[2][static_cast<size_t>(ia)] - ch[2][static_cast<size_t>(ib)];
        return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
    };

    std::vector<Edge> edges;
    edges.reserve(static_cast<size_t>(n) * 4);
    size_t four_edge_count = 0;  // 4-connected edges come first
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int idx = y * w + x;
            if (x + 1 < w) edges.push_back({idx, idx + 1, color_dist(idx, idx + 1)});
            if (y + 1 < h) edges.push_back({idx, idx + w, color_dist(idx, idx + w)});
        }
    four_edge_count = edges.size();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int idx = y * w + x;
            if (x + 1 < w && y + 1 < h)
                edges.push_back({idx, idx + w + 1, color_dist(idx, idx + w + 1)});
            if (x + 1 < w && y > 0)
                edges.push_back({idx, idx - w + 1, color_dist(idx, idx - w + 1)});
        }

    // ties broken by edge index for determinism
    std::vector<int32_t> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        return edges[static_cast<size_t>(a)].w < edges[static_cast<size_t>(b)].w;
    });

    float k = config.effective_k();
    UnionFind uf(n);
    std::vector<float> threshold(static_cast<size_t>(n), k);
    std::vector<float> internal(static_cast<size_t>(n), 0.0f);
    for (int32_t ei : order) {
        const Edge& e = edges[static_cast<size_t>(ei)];
        int32_t a = uf.find(e.a), b = uf.find(e.b);
        if (a == b) continue;
        if (e.w <= threshold[static_cast<size_t>(a)] && e.w <= threshold[static_cast<size_t>(b)]) {
            int32_t r = uf.join(a, b);
            internal[static_cast<size_t>(r)] = e.w;
            threshold[static_cast<size_t>(r)] = e.w + k / static_cast<float>(uf.size[static_cast<size_t>(r)]);
        }
    }

    // Split 8-connected merge results into 4-connected pieces, then absorb
    // pieces below min_region_size into their lowest-weight 4-neighbor.
    std::vector<int32_t> roots(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) roots[static_cast<size_t>(i)] = uf.find(i);
    RegionMap split = relabel_4connected(h, w, roots);

    // Weights between adjacent pieces reuse the 4-edge list in ascending order,
    // so a small piece merges through its cheapest boundary edge first.
    std::vector<int32_t> order4;
    order4.reserve(four_edge_count);
    for (int32_t ei : order)
        if (static_cast<size_t>(ei) < four_edge_count) order4.push_back(ei);
    UnionFind uf2(split.num_regions);
    std::vector<int32_t> comp_pixels(static_cast<size_t>(split.num_regions), 0);
    for (int32_t l : split.labels) ++comp_pixels[static_cast<size_t>(l)];
    for (int32_t ei : order4) {
        const Edge& e = edges[static_cast<size_t>(ei)];
        int32_t a = uf2.find(split.labels[static_cast<size_t>(e.a)]);
        int32_t b = uf2.find(split.labels[static_cast<size_t>(e.b)]);
        if (a == b) continue;
        if (comp_pixels[static_cast<size_t>(a)] < config.min_region_size ||
            comp_pixels[static_cast<size_t>(b)] < config.min_region_size) {
            int32_t r = uf2.join(a, b);
            comp_pixels[static_cast<size_t>(r)] =
                comp_pixels[static_cast<size_t>(a)] + comp_pixels[static_cast<size_t>(b)];
        }
    }

    std::vector<int32_t> final_comp(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        final_comp[static_cast<size_t>(i)] = uf2.find(split.labels[static_cast<size_t>(i)]);
    return relabel_4connected(h, w, final_comp);
}

RegionMap restrict_to_background(const RegionMap& regions, const Mask& fg_mask) {
    if (regions.height != fg_mask.height || regions.width != fg_mask.width)
        throw DimensionError("restrict_to_background: shape mismatch");
    int h = regions.height, w = regions.width;
    std::vector<int32_t> comp(static_cast<size_t>(h) * w);
    for (int i = 0; i < h * w; ++i)
        comp[static_cast<size_t>(i)] =
            fg_mask.data[static_cast<size_t>(i)] ? -1 : regions.labels[static_cast<size_t>(i)];
    return relabel_4connected(h, w, comp);
}

void save_region_map(const std::string& base_path, const RegionMap& rm) {
    save_ftns_i32(base_path + ".ftns", {rm.height, rm.width}, rm.labels);
    std::vector<uint8_t> bytes(rm.labels.size());
    for (size_t i = 0; i < bytes.size(); ++i) {
        int32_t l = rm.labels[i];
        bytes[i] = l < 0 ? 0 : static_cast<uint8_t>((l * 37 + 41) % 256);
    }
    write_pgm_raw(base_path + ".pgm", rm.height, rm.width, bytes);
}

RegionMap load_region_map(const std::string& ftns_path) {
    RegionMap rm;
    std::vector<int> shape;
    load_ftns_i32(ftns_path, shape, rm.labels);
    if (shape.size() != 2) throw IoError("region map must be rank-2: " + ftns_path);
    rm.height = shape[0];
    rm.width = shape[1];
    int32_t mx = -1;
    for (int32_t l : rm.labels) mx = std::max(mx, l);
    rm.num_regions = mx + 1;
    return rm;
}

}  // namespace fss
