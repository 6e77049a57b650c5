#include "fss/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fss {

using json = nlohmann::json;

const char* const kClassNames[8] = {"circle", "square", "triangle", "ring",
                               "cross",  "star",   "bar",      "ellipse"};

uint64_t SyntheticDatasetConfig::content_hash() const {
    json j;
    j["image_size"] = image_size;
    j["num_classes"] = num_classes;
    j["images_per_class"] = images_per_class;
    j["folds"] = folds;
    j["novel_per_fold"] = novel_per_fold;
    j["distractor_probability"] = distractor_probability;
    j["background_cells"] = background_cells;
    j["noise_level"] = noise_level;
    j["seed"] = seed;
    return fnv1a64(j.dump());
}

namespace {

struct Rgb {
    float r, g, b;
};

constexpr Rgb kClassColors[8] = {
    {0.85f, 0.25f, 0.25f},  // red
    {0.25f, 0.75f, 0.30f},  // green
    {0.25f, 0.40f, 0.85f},  // blue
    {0.85f, 0.80f, 0.25f},  // yellow
    {0.80f, 0.30f, 0.80f},  // magenta
    {0.30f, 0.80f, 0.80f},  // cyan
    {0.90f, 0.55f, 0.20f},  // orange
    {0.55f, 0.30f, 0.75f},  // purple
};

constexpr Rgb kBackgroundPalette[6] = {
    {0.55f, 0.50f, 0.42f}, {0.50f, 0.50f, 0.50f}, {0.45f, 0.48f, 0.35f},
    {0.45f, 0.37f, 0.30f}, {0.42f, 0.46f, 0.52f}, {0.52f, 0.44f, 0.44f},
};

struct ObjectInstance {
    int class_id;
    float cx, cy;       // center, pixels
    float radius;       // characteristic size
    float angle;        // used by bar/ellipse
    int phase;          // texture phase
    Rgb color_a, color_b;
};

bool inside_shape(const ObjectInstance& o, int x, int y) {
    float dx = x - o.cx, dy = y - o.cy;
    float r = o.radius;
    switch (o.class_id) {
        case 0:  // circle
            return dx * dx + dy * dy <= r * r;
        case 1:  // square
            return std::abs(dx) <= r * 0.9f && std::abs(dy) <= r * 0.9f;
        case 2: {  // upward triangle
            if (dy < -r || dy > r * 0.8f) return false;
            float half_width = (dy + r) / (1.8f * r) * r;
            return std::abs(dx) <= half_width;
        }
        case 3: {  // ring
            float d2 = dx * dx + dy * dy;
            return d2 <= r * r && d2 >= (0.45f * r) * (0.45f * r);
        }
        case 4: {  // cross
            float t = r * 0.34f;
            return (std::abs(dx) <= t && std::abs(dy) <= r) ||
                   (std::abs(dy) <= t && std::abs(dx) <= r);
        }
        case 5: {  // four-point star (astroid)
            float u = std::sqrt(std::abs(dx) / r), v = std::sqrt(std::abs(dy) / r);
            return u + v <= 1.0f;
        }
        case 6: {  // rotated bar
            float ca = std::cos(o.angle), sa = std::sin(o.angle);
            float u = ca * dx + sa * dy;
            float v = -sa * dx + ca * dy;
            return std::abs(u) <= r && std::abs(v) <= r * 0.35f;
        }
        case 7: {  // ellipse
            float ca = std::cos(o.angle), sa = std::sin(o.angle);
            float u = (ca * dx + sa * dy) / r;
            float v = (-sa * dx + ca * dy) / (r * 0.55f);
            return u * u + v * v <= 1.0f;
        }
        default:
            return false;
    }
}

Rgb texture_color(const ObjectInstance& o, int x, int y) {
    int p = o.phase;
    bool alt = false;
    switch (o.class_id) {
        case 0:  // horizontal stripes, period 6
            alt = ((y + p) / 3) % 2 == 0;
            break;
        case 1:  // vertical stripes, period 6
            alt = ((x + p) / 3) % 2 == 0;
            break;
        case 2:  // checker 4
            alt = ((x / 4) + (y / 4)) % 2 == 0;
            break;
        case 3: {  // dot grid 5
            int mx = (x + p) % 5 - 2, my = (y + p) % 5 - 2;
            alt = mx * mx + my * my <= 1;
            break;
        }
        case 4:  // diagonal stripes, period 6
            alt = ((x + y + p) / 3) % 2 == 0;
            break;
        case 5:  // coarse checker 8
            alt = ((x / 8) + (y / 8)) % 2 == 0;
            break;
        case 6: {  // fine dots 3
            alt = ((x + p) % 3 == 0) && ((y + p) % 3 == 0);
            break;
        }
        case 7: {  // speckle
            uint64_t h = fnv1a64(&x, sizeof(x), fnv1a64(&y, sizeof(y), 0x9e37 + static_cast<uint64_t>(p)));
            alt = (h & 7) < 3;
            break;
        }
    }
    return alt ? o.color_b : o.color_a;
}

Rgb jitter_color(const Rgb& base, Rng& rng, float amount) {
    auto j = [&](float v) {
        return std::clamp(v + static_cast<float>(rng.uniform(-amount, amount)), 0.05f, 0.95f);
    };
    return {j(base.r), j(base.g), j(base.b)};
}

ObjectInstance make_instance(int class_id, int image_size, float min_r, float max_r, Rng& rng) {
    ObjectInstance o;
    o.class_id = class_id;
    o.radius = static_cast<float>(rng.uniform(min_r, max_r));
    float margin = o.radius + 2.0f;
    o.cx = static_cast<float>(rng.uniform(margin, image_size - margin));
    o.cy = static_cast<float>(rng.uniform(margin, image_size - margin));
    o.angle = static_cast<float>(rng.uniform(0.0, 3.14159265));
    o.phase = rng.uniform_int(0, 11);
    Rgb base = kClassColors[class_id];
    o.color_a = jitter_color(base, rng, 0.08f);
    // darker companion tone keeps the texture contrast inside the object
    Rgb darker{base.r * 0.45f, base.g * 0.45f, base.b * 0.45f};
    o.color_b = jitter_color(darker, rng, 0.06f);
    return o;
}

void draw_object(Image& img, Mask* mask, const ObjectInstance& o) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (!inside_shape(o, x, y)) continue;
            Rgb c = texture_color(o, x, y);
            img.at(y, x, 0) = c.r;
            img.at(y, x, 1) = c.g;
            img.at(y, x, 2) = c.b;
            if (mask) mask->at(y, x) = 1;
        }
}

void render_background(Image& img, const SyntheticDatasetConfig& cfg, Rng& rng) {
    int n = std::max(1, cfg.background_cells);
    std::vector<float> sx(static_cast<size_t>(n)), sy(static_cast<size_t>(n));
    std::vector<Rgb> color(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        sx[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(0.0, img.width));
        sy[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(0.0, img.height));
        color[static_cast<size_t>(i)] =
            jitter_color(kBackgroundPalette[rng.uniform_int(0, 5)], rng, 0.05f);
    }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float best = 1e30f;
            int bi = 0;
            for (int i = 0; i < n; ++i) {
                float dx = x - sx[static_cast<size_t>(i)], dy = y - sy[static_cast<size_t>(i)];
                float d = dx * dx + dy * dy;
                if (d < best) {
                    best = d;
                    bi = i;
                }
            }
            img.at(y, x, 0) = color[static_cast<size_t>(bi)].r;
            img.at(y, x, 1) = color[static_cast<size_t>(bi)].g;
            img.at(y, x, 2) = color[static_cast<size_t>(bi)].b;
        }
}

}  // namespace

void generate_synthetic_dataset(const SyntheticDatasetConfig& config, const std::string& out_dir) {
    config.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir + "/images", ec);
    fs::create_directories(out_dir + "/masks", ec);
    fs::create_directories(out_dir + "/distractors", ec);
    if (!fs::exists(out_dir + "/images"))
        throw IoError("cannot create dataset directories under " + out_dir);

    json index;
    index["config"] = {{"image_size", config.image_size},
                       {"num_classes", config.num_classes},
                       {"images_per_class", config.images_per_class},
                       {"folds", config.folds},
                       {"novel_per_fold", config.novel_per_fold},
                       {"distractor_probability", config.distractor_probability},
                       {"background_cells", config.background_cells},
                       {"noise_level", config.noise_level},
                       {"seed", config.seed}};
    json folds = json::array();
    for (int f = 0; f < config.folds; ++f) {
        json novel = json::array();
        for (int j = 0; j < config.novel_per_fold; ++j) novel.push_back(f * config.novel_per_fold + j);
        folds.push_back(novel);
    }
    index["folds"] = folds;
    json names = json::array();
    for (int c = 0; c < config.num_classes; ++c) names.push_back(kClassNames[c]);
    index["class_names"] = names;

    float min_r = config.image_size * 0.16f;
    float max_r = config.image_size * 0.26f;
    float dmin_r = config.image_size * 0.10f;
    float dmax_r = config.image_size * 0.16f;

    json images = json::array();
    char buf[64];
    for (int c = 0; c < config.num_classes; ++c) {
        for (int j = 0; j < config.images_per_class; ++j) {
            int id = c * config.images_per_class + j;
            Rng rng(Rng::derive(config.seed, static_cast<uint64_t>(id) + 0x1000));
            Image img(config.image_size, config.image_size);
            render_background(img, config, rng);

            int distractor_class = -1;
            Mask distractor_mask(config.image_size, config.image_size);
            if (rng.bernoulli(config.distractor_probability)) {
                distractor_class = rng.uniform_int(0, config.num_classes - 2);
                if (distractor_class >= c) ++distractor_class;  // any class but the primary
                ObjectInstance d = make_instance(distractor_class, config.image_size, dmin_r,
                                                 dmax_r, rng);
                draw_object(img, &distractor_mask, d);
            }

            Mask mask(config.image_size, config.image_size);
            ObjectInstance o = make_instance(c, config.image_size, min_r, max_r, rng);
            draw_object(img, &mask, o);
            // the primary object overdraws any distractor overlap
            for (size_t i = 0; i < mask.data.size(); ++i)
                if (mask.data[i]) distractor_mask.data[i] = 0;

            for (auto& v : img.pixels)
                v = std::clamp(
                    v + static_cast<float>(rng.uniform(-config.noise_level, config.noise_level)),
                    0.0f, 1.0f);

            std::snprintf(buf, sizeof(buf), "img_%05d", id);
            std::string stem(buf);
            write_ppm(out_dir + "/images/" + stem + ".ppm", img);
            write_pgm(out_dir + "/masks/" + stem + ".pgm", mask);

            json e;
            e["id"] = id;
            e["image"] = "images/" + stem + ".ppm";
            e["mask"] = "masks/" + stem + ".pgm";
            e["class_id"] = c;
            e["distractor_class"] = distractor_class;
            if (distractor_class >= 0) {
                write_pgm(out_dir + "/distractors/" + stem + ".pgm", distractor_mask);
                e["distractor_mask"] = "distractors/" + stem + ".pgm";
            } else {
                e["distractor_mask"] = nullptr;
            }
            images.push_back(e);
        }
    }
    index["images"] = images;
    index["content_hash"] = hex64(config.content_hash());

    std::ofstream os(out_dir + "/index.json");
    if (!os) throw IoError("cannot write dataset index under " + out_dir);
    os << index.dump(1) << "\n";
}

DatasetIndex load_dataset_index(const std::string& dir) {
    std::ifstream is(dir + "/index.json");
    if (!is) throw IoError("cannot read dataset index in " + dir);
    json index = json::parse(is);
    DatasetIndex d;
    d.root = dir;
    const json& c = index["config"];
    d.config.image_size = c["image_size"].get<int>();
    d.config.num_classes = c["num_classes"].get<int>();
    d.config.images_per_class = c["images_per_class"].get<int>();
    d.config.folds = c["folds"].get<int>();
    d.config.novel_per_fold = c["novel_per_fold"].get<int>();
    d.config.distractor_probability = c["distractor_probability"].get<float>();
    d.config.background_cells = c["background_cells"].get<int>();
    d.config.noise_level = c["noise_level"].get<float>();
    d.config.seed = c["seed"].get<uint64_t>();
    for (const auto& f : index["folds"]) {
        std::vector<int> novel;
        for (const auto& v : f) novel.push_back(v.get<int>());
        d.fold_novel_classes.push_back(novel);
    }
    for (const auto& e : index["images"]) {
        DatasetImageInfo info;
        info.id = e["id"].get<int>();
        info.image_path = e["image"].get<std::string>();
        info.mask_path = e["mask"].get<std::string>();
        info.class_id = e["class_id"].get<int>();
        info.distractor_class = e["distractor_class"].get<int>();
        if (!e["distractor_mask"].is_null())
            info.distractor_mask_path = e["distractor_mask"].get<std::string>();
        d.images.push_back(info);
    }
    return d;
}

std::vector<int> DatasetIndex::images_of_class(int class_id) const {
    std::vector<int> out;
    for (const auto& e : images)
        if (e.class_id == class_id) out.push_back(e.id);
    return out;
}

bool DatasetIndex::is_novel(int fold, int class_id) const {
    const auto& novel = fold_novel_classes[static_cast<size_t>(fold)];
    return std::find(novel.begin(), novel.end(), class_id) != novel.end();
}

std::vector<int> DatasetIndex::train_ids(int fold) const {
    std::vector<int> out;
    for (const auto& e : images)
        if (!is_novel(fold, e.class_id)) out.push_back(e.id);
    return out;
}

Image DatasetIndex::load_image(int id) const {
    return read_ppm(root + "/" + images[static_cast<size_t>(id)].image_path);
}

Mask DatasetIndex::load_mask(int id) const {
    return read_pgm_mask(root + "/" + images[static_cast<size_t>(id)].mask_path);
}

Mask DatasetIndex::load_distractor_mask(int id) const {
    const auto& info = images[static_cast<size_t>(id)];
    if (info.distractor_mask_path.empty())
        return Mask(config.image_size, config.image_size);
    return read_pgm_mask(root + "/" + info.distractor_mask_path);
}

std::vector<Episode> sample_episodes(const DatasetIndex& index, int fold, int k_shot,
                                     int n_episodes, uint64_t seed) {
    if (fold < 0 || fold >= static_cast<int>(index.fold_novel_classes.size()))
        throw ConfigError("sample_episodes: fold out of range");
    if (k_shot < 1 || n_episodes < 1) throw ConfigError("sample_episodes: bad k_shot/episodes");
    const auto& novel = index.fold_novel_classes[static_cast<size_t>(fold)];
    std::vector<std::vector<int>> pools;
    for (int c : novel) {
        auto ids = index.images_of_class(c);
        if (static_cast<int>(ids.size()) < k_shot + 1)
            throw DataError("sample_episodes: class " + std::to_string(c) +
                            " has fewer than k+1 images");
        pools.push_back(std::move(ids));
    }
    Rng rng(Rng::derive(seed, 0xe915 + static_cast<uint64_t>(fold) * 131 +
                                  static_cast<uint64_t>(k_shot)));
    std::vector<Episode> out;
    out.reserve(static_cast<size_t>(n_episodes));
    for (int e = 0; e < n_episodes; ++e) {
        int ci = rng.uniform_int(0, static_cast<int>(novel.size()) - 1);
        const auto& pool = pools[static_cast<size_t>(ci)];
        auto pick = rng.sample_without_replacement(static_cast<int>(pool.size()), k_shot + 1);
        Episode ep;
        ep.class_id = novel[static_cast<size_t>(ci)];
        for (int i = 0; i < k_shot; ++i)
            ep.support_ids.push_back(pool[static_cast<size_t>(pick[static_cast<size_t>(i)])]);
        ep.query_id = pool[static_cast<size_t>(pick[static_cast<size_t>(k_shot)])];
        out.push_back(std::move(ep));
    }
    return out;
}

}  // namespace fss
