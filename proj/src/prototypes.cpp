#include "fss/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fss/losses.hpp"

namespace fss {

namespace {

using json = nlohmann::json;

void l2_normalize(std::vector<float>& v) {
    double n = 0.0;
    for (float x : v) n += static_cast<double>(x) * x;
    n = std::sqrt(n);
    if (n < 1e-12) throw DataError("cannot normalize zero-norm descriptor");
    for (float& x : v) x = static_cast<float>(x / n);
}

double sq_dist(const std::vector<float>& a, const std::vector<float>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double t = static_cast<double>(a[i]) - b[i];
        d += t * t;
    }
    return d;
}

}  // namespace

void ClusterConfig::validate() const {
    if (level_sizes.empty()) throw ConfigError("cluster config needs at least one level");
    for (size_t l = 0; l < level_sizes.size(); ++l) {
        if (level_sizes[l].first < 1 || level_sizes[l].second < 1)
            throw ConfigError("cluster counts must be >= 1");
        if (l > 0 && (level_sizes[l].first >= level_sizes[l - 1].first ||
                      level_sizes[l].second >= level_sizes[l - 1].second))
            throw ConfigError("cluster counts must strictly decrease per level");
    }
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (tol < 0.0f) throw ConfigError("tol must be nonnegative");
}

ClusterConfig ClusterConfig::desk_default(uint64_t seed) {
    ClusterConfig c;
    c.level_sizes = {{8, 12}, {4, 6}, {2, 3}};
    c.seed = seed;
    return c;
}

ClusterConfig ClusterConfig::pascal_preset(uint64_t seed) {
    ClusterConfig c;
    // combined per-level counts {50,25,15} split fg/bg
    c.level_sizes = {{20, 30}, {10, 15}, {6, 9}};
    c.seed = seed;
    return c;
}

KmeansResult kmeans(const std::vector<std::vector<float>>& points, int k,
                    const ClusterConfig& config, uint64_t seed_salt) {
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    if (static_cast<size_t>(k) > points.size())
        throw ConfigError("kmeans: k exceeds number of points; reduce the level size");
    int n = static_cast<int>(points.size());
    size_t dim = points[0].size();
    Rng rng(Rng::derive(config.seed, seed_salt));

    KmeansResult res;
    res.centers.reserve(static_cast<size_t>(k));

    // k-means++ seeding
    res.centers.push_back(points[static_cast<size_t>(rng.uniform_int(0, n - 1))]);
    std::vector<double> d2(static_cast<size_t>(n));
    while (static_cast<int>(res.centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = 1e300;
            for (const auto& c : res.centers) best = std::min(best, sq_dist(points[static_cast<size_t>(i)], c));
            d2[static_cast<size_t>(i)] = best;
            total += best;
        }
        int pick = 0;
        if (total <= 0.0) {
            pick = rng.uniform_int(0, n - 1);  // all points coincide with centers
        } else {
            double r = rng.uniform() * total;
            double run = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                run += d2[static_cast<size_t>(i)];
                if (run >= r) {
                    pick = i;
                    break;
                }
            }
        }
        res.centers.push_back(points[static_cast<size_t>(pick)]);
    }

    res.assignments.assign(static_cast<size_t>(n), -1);
    std::vector<int> prev_assign;
    for (int iter = 0; iter < config.max_iters; ++iter) {
        // assignment pass (ties -> lowest center index)
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = 1e300;
            int bi = 0;
            for (int c = 0; c < k; ++c) {
                double d = sq_dist(points[static_cast<size_t>(i)], res.centers[static_cast<size_t>(c)]);
                if (d < best) {
                    best = d;
                    bi = c;
                }
            }
            res.assignments[static_cast<size_t>(i)] = bi;
            inertia += best;
        }
        res.inertia_trace.push_back(inertia);
        res.inertia = inertia;
        res.iterations = iter + 1;
        if (res.assignments == prev_assign) break;  // fixed point
        prev_assign = res.assignments;

        // update pass
        std::vector<std::vector<double>> acc(static_cast<size_t>(k),
                                             std::vector<double>(dim, 0.0));
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            int c = res.assignments[static_cast<size_t>(i)];
            ++counts[static_cast<size_t>(c)];
            for (size_t j = 0; j < dim; ++j)
                acc[static_cast<size_t>(c)][j] += points[static_cast<size_t>(i)][j];
        }
        double max_move2 = 0.0;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) continue;
            std::vector<float> nc(dim);
            for (size_t j = 0; j < dim; ++j)
                nc[j] = static_cast<float>(acc[static_cast<size_t>(c)][j] /
                                           counts[static_cast<size_t>(c)]);
            max_move2 = std::max(max_move2, sq_dist(nc, res.centers[static_cast<size_t>(c)]));
            res.centers[static_cast<size_t>(c)] = std::move(nc);
        }
        bool reseeded = false;
        // reseed empty clusters to the point farthest from its own center
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] != 0) continue;
            double worst = -1.0;
            int pick = 0;
            for (int i = 0; i < n; ++i) {
                int a = res.assignments[static_cast<size_t>(i)];
                double d = sq_dist(points[static_cast<size_t>(i)], res.centers[static_cast<size_t>(a)]);
                if (d > worst) {
                    worst = d;
                    pick = i;
                }
            }
            res.centers[static_cast<size_t>(c)] = points[static_cast<size_t>(pick)];
            reseeded = true;
        }
        if (!reseeded && max_move2 < static_cast<double>(config.tol) * config.tol) break;
    }

    // Normalize centers, then polish to a joint fixed point on the sphere so
    // that (a) every point sits with its nearest returned center and (b) each
    // center equals the normalized mean of its members. This loop is not part
    // of the Lloyd descent and is excluded from the inertia trace.
    for (auto& c : res.centers) {
        double nrm = 0.0;
        for (float x : c) nrm += static_cast<double>(x) * x;
        if (nrm > 1e-24) l2_normalize(c);
    }
    for (int polish = 0; polish < config.max_iters; ++polish) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            double best = 1e300;
            int bi = 0;
            for (int c = 0; c < k; ++c) {
                double d = sq_dist(points[static_cast<size_t>(i)], res.centers[static_cast<size_t>(c)]);
                if (d < best) {
                    best = d;
                    bi = c;
                }
            }
            if (res.assignments[static_cast<size_t>(i)] != bi) {
                res.assignments[static_cast<size_t>(i)] = bi;
                changed = true;
            }
        }
        if (!changed && polish > 0) break;
        std::vector<std::vector<double>> acc(static_cast<size_t>(k),
                                             std::vector<double>(dim, 0.0));
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            int c = res.assignments[static_cast<size_t>(i)];
            ++counts[static_cast<size_t>(c)];
            for (size_t j = 0; j < dim; ++j)
                acc[static_cast<size_t>(c)][j] += points[static_cast<size_t>(i)][j];
        }
        bool moved = false;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) continue;
            std::vector<float> nc(dim);
            double nrm = 0.0;
            for (size_t j = 0; j < dim; ++j) {
                nc[j] = static_cast<float>(acc[static_cast<size_t>(c)][j] /
                                           counts[static_cast<size_t>(c)]);
                nrm += static_cast<double>(nc[j]) * nc[j];
            }
            if (nrm <= 1e-24) continue;  // degenerate symmetric cluster, keep old center
            l2_normalize(nc);
            if (nc != res.centers[static_cast<size_t>(c)]) moved = true;
            res.centers[static_cast<size_t>(c)] = std::move(nc);
        }
        if (!changed && !moved) break;
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
        inertia += sq_dist(points[static_cast<size_t>(i)],
                           res.centers[static_cast<size_t>(res.assignments[static_cast<size_t>(i)])]);
    res.inertia = inertia;
    return res;
}

int PrototypeHierarchy::channels() const {
    if (levels.empty() || levels[0].fg.empty()) return 0;
    return static_cast<int>(levels[0].fg[0].size());
}

uint64_t PrototypeHierarchy::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& lv : levels) {
        for (const auto& p : lv.fg) h = fnv1a64(p.data(), p.size() * sizeof(float), h);
        for (const auto& p : lv.bg) h = fnv1a64(p.data(), p.size() * sizeof(float), h);
    }
    return h;
}

void extract_region_descriptors(const Tensor& features, const RegionMap& regions,
                                const Mask& fg_mask, int image_id, RegionCorpus& corpus) {
    if (features.ndim() != 3) throw DimensionError("extract_region_descriptors: features (C,H,W)");
    int fh = features.dim(1), fw = features.dim(2);
    if (regions.height != fg_mask.height || regions.width != fg_mask.width)
        throw DimensionError("extract_region_descriptors: region/mask mismatch");

    std::vector<int32_t> ds_labels =
        nn_resample_labels(regions.labels, regions.height, regions.width, fh, fw);
    Mask ds_fg = majority_downsample(fg_mask, fh, fw);

    // background regions, clipped to background cells
    for (size_t i = 0; i < ds_labels.size(); ++i)
        if (ds_fg.data[i]) ds_labels[i] = RegionMap::kForeground;

    for (int32_t r = 0; r < regions.num_regions; ++r) {
        RegionDescriptor d;
        d.image_id = image_id;
        d.region_id = r;
        d.foreground = false;
        int count = 0;
        for (int32_t l : ds_labels) count += (l == r) ? 1 : 0;
        if (count == 0) {
            ++corpus.skipped_empty;
            continue;
        }
        d.pixel_count = count;
        d.vector = mask_average_pool(features, ds_labels, r);
        try {
            l2_normalize(d.vector);
        } catch (const DataError&) {
            ++corpus.skipped_empty;
            continue;
        }
        corpus.bg.push_back(std::move(d));
    }

    // one foreground descriptor per annotated mask
    int fg_count = static_cast<int>(ds_fg.count_fg());
    if (fg_mask.count_fg() > 0) {
        if (fg_count == 0) {
            ++corpus.skipped_empty;
        } else {
            std::vector<int32_t> fg_labels(ds_fg.data.size());
            for (size_t i = 0; i < fg_labels.size(); ++i) fg_labels[i] = ds_fg.data[i] ? 1 : 0;
            RegionDescriptor d;
            d.image_id = image_id;
            d.foreground = true;
            d.pixel_count = fg_count;
            d.vector = mask_average_pool(features, fg_labels, 1);
            try {
                l2_normalize(d.vector);
                corpus.fg.push_back(std::move(d));
            } catch (const DataError&) {
                ++corpus.skipped_empty;
            }
        }
    }
}

PrototypeHierarchy build_hierarchy(const RegionCorpus& corpus, const ClusterConfig& config) {
    config.validate();
    if (corpus.fg.size() < static_cast<size_t>(config.level_sizes[0].first) ||
        corpus.bg.size() < static_cast<size_t>(config.level_sizes[0].second))
        throw ConfigError("corpus smaller than level-1 cluster count; use smaller level sizes");

    std::vector<std::vector<float>> fg_points, bg_points;
    fg_points.reserve(corpus.fg.size());
    for (const auto& d : corpus.fg) fg_points.push_back(d.vector);
    bg_points.reserve(corpus.bg.size());
    for (const auto& d : corpus.bg) bg_points.push_back(d.vector);

    PrototypeHierarchy h;
    h.seed = config.seed;
    for (size_t l = 0; l < config.level_sizes.size(); ++l) {
        auto [kfg, kbg] = config.level_sizes[l];
        PrototypeHierarchy::Level lv;
        lv.fg = kmeans(fg_points, kfg, config, 2 * l).centers;
        lv.bg = kmeans(bg_points, kbg, config, 2 * l + 1).centers;
        fg_points = lv.fg;  // next level clusters these prototypes
        bg_points = lv.bg;
        h.levels.push_back(std::move(lv));
    }
    return h;
}

void save_hierarchy(const std::string& dir, const PrototypeHierarchy& h) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["levels"] = h.num_levels();
    manifest["seed"] = h.seed;
    manifest["encoder_hash"] = h.encoder_hash;
    manifest["content_hash"] = hex64(h.content_hash());
    json sizes = json::array();
    for (int l = 0; l < h.num_levels(); ++l) {
        sizes.push_back({h.fg_count(l), h.bg_count(l)});
        for (int side = 0; side < 2; ++side) {
            const auto& protos = side == 0 ? h.levels[static_cast<size_t>(l)].fg
                                           : h.levels[static_cast<size_t>(l)].bg;
            Tensor t({static_cast<int>(protos.size()), static_cast<int>(protos[0].size())});
            for (size_t i = 0; i < protos.size(); ++i)
                std::copy(protos[i].begin(), protos[i].end(),
                          t.data.begin() + static_cast<long>(i * protos[0].size()));
            save_ftns(dir + "/level" + std::to_string(l) + (side == 0 ? ".fg" : ".bg") + ".ftns", t);
        }
    }
    manifest["sizes"] = sizes;
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw IoError("cannot write hierarchy manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

PrototypeHierarchy load_hierarchy(const std::string& dir) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw IoError("cannot read hierarchy manifest in " + dir);
    json manifest = json::parse(is);
    PrototypeHierarchy h;
    h.seed = manifest["seed"].get<uint64_t>();
    h.encoder_hash = manifest.value("encoder_hash", "");
    int levels = manifest["levels"].get<int>();
    for (int l = 0; l < levels; ++l) {
        PrototypeHierarchy::Level lv;
        for (int side = 0; side < 2; ++side) {
            Tensor t = load_ftns(dir + "/level" + std::to_string(l) +
                                 (side == 0 ? ".fg" : ".bg") + ".ftns");
            auto& protos = side == 0 ? lv.fg : lv.bg;
            int k = t.dim(0), c = t.dim(1);
            protos.resize(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i)
                protos[static_cast<size_t>(i)] =
                    std::vector<float>(t.data.begin() + static_cast<long>(i) * c,
                                       t.data.begin() + static_cast<long>(i + 1) * c);
        }
        h.levels.push_back(std::move(lv));
    }
    return h;
}

}  // namespace fss
