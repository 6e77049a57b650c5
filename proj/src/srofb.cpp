#include "fss/srofb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fss/losses.hpp"

namespace fss {

void PixelSampleSet::append(const PixelSampleSet& other) {
    positives.insert(positives.end(), other.positives.begin(), other.positives.end());
    negatives.insert(negatives.end(), other.negatives.begin(), other.negatives.end());
    positive_from_query.insert(positive_from_query.end(), other.positive_from_query.begin(),
                               other.positive_from_query.end());
    negative_from_query.insert(negative_from_query.end(), other.negative_from_query.begin(),
                               other.negative_from_query.end());
}

OFBClassifier OFBClassifier::make(int in_channels, int hidden, float dropout_rate, Rng& rng) {
    OFBClassifier c;
    c.in_channels = in_channels;
    c.net.layers.push_back(Layer::linear(in_channels, hidden, rng));
    c.net.layers.push_back(Layer::relu());
    c.net.layers.push_back(Layer::dropout(dropout_rate));
    c.net.layers.push_back(Layer::linear(hidden, 1, rng));
    return c;
}

std::vector<float> OFBClassifier::score(const Tensor& features_nc, Mode mode, Rng* rng,
                                        Network::Ctx* ctx_out) const {
    if (features_nc.ndim() != 2 || features_nc.dim(1) != in_channels)
        throw DimensionError("OFBClassifier: features must be (N,C)");
    Network::Ctx local;
    Network::Ctx& ctx = ctx_out ? *ctx_out : local;
    Tensor logits = net.forward(features_nc, ctx, mode, rng);
    std::vector<float> out(static_cast<size_t>(logits.dim(0)));
    for (int i = 0; i < logits.dim(0); ++i)
        out[static_cast<size_t>(i)] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logits.at(i, 0)))));
    return out;
}

Tensor rough_segment(const Tensor& query_features, const MaskPrototypes& protos,
                     float temperature) {
    if (temperature <= 0.0f) throw ConfigError("rough_segment: temperature must be positive");
    int h = query_features.dim(1), w = query_features.dim(2);
    int C = query_features.dim(0);
    Tensor out({2, h, w});
    std::vector<float> f(static_cast<size_t>(C));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < C; ++c) f[static_cast<size_t>(c)] = query_features.at(c, y, x);
            auto s = paired_similarity(f, protos);
            double l0 = s[0] / temperature, l1 = s[1] / temperature;
            double m = std::max(l0, l1);
            double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            double z = e0 + e1;
            out.at(0, y, x) = static_cast<float>(e0 / z);
            out.at(1, y, x) = static_cast<float>(e1 / z);
        }
    return out;
}

namespace {

std::vector<float> cell_vector(const Tensor& features, int y, int x) {
    int C = features.dim(0);
    std::vector<float> v(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) v[static_cast<size_t>(c)] = features.at(c, y, x);
    return v;
}

}  // namespace

PixelSampleSet select_confident_pixels(const Tensor& score_map, const Tensor& query_features,
                                       const RefineConfig& config, HarvestCounts* counts) {
    config.validate();
    if (score_map.ndim() != 3 || score_map.dim(0) != 2)
        throw DimensionError("select_confident_pixels: score map must be (2,h,w)");
    int h = score_map.dim(1), w = score_map.dim(2);
    if (query_features.dim(1) != h || query_features.dim(2) != w)
        throw DimensionError("select_confident_pixels: features not aligned with scores");

    // (score, flat index), sorted descending with ties to the lower index
    std::vector<std::pair<float, int>> fg_cand, bg_cand;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float s_fg = score_map.at(1, y, x);
            float s_bg = score_map.at(0, y, x);
            int idx = y * w + x;
            if (s_fg > config.tau_fg) fg_cand.push_back({s_fg, idx});
            if (s_bg > config.tau_bg) bg_cand.push_back({s_bg, idx});
        }
    auto by_score = [](const std::pair<float, int>& a, const std::pair<float, int>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::sort(fg_cand.begin(), fg_cand.end(), by_score);
    std::sort(bg_cand.begin(), bg_cand.end(), by_score);
    if (counts) {
        counts->fg_above_threshold = static_cast<int>(fg_cand.size());
        counts->bg_above_threshold = static_cast<int>(bg_cand.size());
    }
    size_t cap = static_cast<size_t>(config.max_pixels_per_class);
    if (fg_cand.size() > cap) fg_cand.resize(cap);
    if (bg_cand.size() > cap) bg_cand.resize(cap);

    PixelSampleSet set;
    for (auto [s, idx] : fg_cand) {
        (void)s;
        set.positives.push_back(cell_vector(query_features, idx / w, idx % w));
        set.positive_from_query.push_back(1);
    }
    for (auto [s, idx] : bg_cand) {
        (void)s;
        set.negatives.push_back(cell_vector(query_features, idx / w, idx % w));
        set.negative_from_query.push_back(1);
    }
    if (counts) {
        counts->positives_kept = static_cast<int>(set.positives.size());
        counts->negatives_kept = static_cast<int>(set.negatives.size());
    }
    return set;
}

PixelSampleSet gather_support_pixels(const std::vector<const Tensor*>& support_features,
                                     const std::vector<const Mask*>& support_masks_feat_res,
                                     const RefineConfig& config) {
    config.validate();
    if (support_features.empty() || support_features.size() != support_masks_feat_res.size())
        throw DimensionError("gather_support_pixels: empty or mismatched supports");
    PixelSampleSet set;
    for (size_t s = 0; s < support_features.size(); ++s) {
        const Tensor& f = *support_features[s];
        const Mask& m = *support_masks_feat_res[s];
        if (m.height != f.dim(1) || m.width != f.dim(2))
            throw DimensionError("gather_support_pixels: mask must be at feature resolution");
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                if (m.at(y, x)) {
                    set.positives.push_back(cell_vector(f, y, x));
                    set.positive_from_query.push_back(0);
                } else {
                    set.negatives.push_back(cell_vector(f, y, x));
                    set.negative_from_query.push_back(0);
                }
            }
    }
    if (set.positives.empty())
        throw MissingForegroundError("gather_support_pixels: no foreground pixel in any support");

    Rng rng(Rng::derive(config.seed, 0x5b5a));
    auto subsample = [&](std::vector<std::vector<float>>& v, std::vector<uint8_t>& tags) {
        if (v.size() <= static_cast<size_t>(config.max_pixels_per_class)) return;
        auto keep = rng.sample_without_replacement(static_cast<int>(v.size()),
                                                   config.max_pixels_per_class);
        std::sort(keep.begin(), keep.end());
        std::vector<std::vector<float>> nv;
        std::vector<uint8_t> nt;
        for (int k : keep) {
            nv.push_back(std::move(v[static_cast<size_t>(k)]));
            nt.push_back(tags[static_cast<size_t>(k)]);
        }
        v = std::move(nv);
        tags = std::move(nt);
    };
    subsample(set.positives, set.positive_from_query);
    subsample(set.negatives, set.negative_from_query);
    return set;
}

OFBClassifier refine_classifier(const PixelSampleSet& samples, const RefineConfig& config,
                                int in_channels, int iterations) {
    config.validate();
    if (samples.positives.empty() || samples.negatives.empty())
        throw DegenerateSampleError("refine_classifier: need at least one sample per class");

    Rng rng(Rng::derive(config.seed, 0x0fb));
    OFBClassifier clf = OFBClassifier::make(in_channels, config.hidden_width,
                                            config.dropout_rate, rng);
    auto params = clf.net.params("ofb.");
    SgdState state;
    SgdConfig sgd;
    sgd.learning_rate = config.learning_rate;
    sgd.momentum = 0.0f;
    sgd.weight_decay = 0.0f;
    sgd.decay_every = 1 << 30;  // constant lr over the short refinement run

    int n_pos = static_cast<int>(samples.positives.size());
    int n_neg = static_cast<int>(samples.negatives.size());
    int per_class = std::min(n_pos, n_neg);

    for (int step = 0; step < iterations; ++step) {
        // class-balanced batch: all of the smaller class, an equal random
        // subset of the larger one
        std::vector<int> pos_idx, neg_idx;
        if (n_pos == per_class) {
            pos_idx.resize(static_cast<size_t>(n_pos));
            std::iota(pos_idx.begin(), pos_idx.end(), 0);
        } else {
            pos_idx = rng.sample_without_replacement(n_pos, per_class);
        }
        if (n_neg == per_class) {
            neg_idx.resize(static_cast<size_t>(n_neg));
            std::iota(neg_idx.begin(), neg_idx.end(), 0);
        } else {
            neg_idx = rng.sample_without_replacement(n_neg, per_class);
        }

        int n = 2 * per_class;
        Tensor batch({n, in_channels});
        std::vector<float> labels(static_cast<size_t>(n));
        for (int i = 0; i < per_class; ++i) {
            const auto& pv = samples.positives[static_cast<size_t>(pos_idx[static_cast<size_t>(i)])];
            const auto& nv = samples.negatives[static_cast<size_t>(neg_idx[static_cast<size_t>(i)])];
            for (int c = 0; c < in_channels; ++c) {
                batch.at(i, c) = pv[static_cast<size_t>(c)];
                batch.at(per_class + i, c) = nv[static_cast<size_t>(c)];
            }
            labels[static_cast<size_t>(i)] = 1.0f;
            labels[static_cast<size_t>(per_class + i)] = 0.0f;
        }

        Network::Ctx ctx;
        Tensor logits = clf.net.forward(batch, ctx, Mode::Train, &rng);
        std::vector<float> scores(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i)
            scores[static_cast<size_t>(i)] =
                static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logits.at(i, 0)))));
        BceResult bce = binary_cross_entropy(scores, labels);
        Tensor grad_logits({n, 1});
        for (int i = 0; i < n; ++i) {
            double s = scores[static_cast<size_t>(i)];
            grad_logits.at(i, 0) =
                static_cast<float>(bce.grad_scores[static_cast<size_t>(i)] * s * (1.0 - s));
        }
        auto gb = clf.net.make_grad_buffer();
        clf.net.backward(grad_logits, ctx, &gb);
        clf.net.accumulate(gb);
        sgd_step(params, state, sgd, step);
    }
    return clf;
}

Mask predict_mask(const OFBClassifier& classifier, const Tensor& query_features, int image_h,
                  int image_w) {
    int C = query_features.dim(0), h = query_features.dim(1), w = query_features.dim(2);
    Tensor flat({h * w, C});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < C; ++c) flat.at(y * w + x, c) = query_features.at(c, y, x);
    std::vector<float> scores = classifier.score(flat, Mode::Eval);

    Tensor score_map({1, h, w});
    std::copy(scores.begin(), scores.end(), score_map.data.begin());
    Layer up = Layer::bilinear_upsample(image_h, image_w);
    LayerCtx ctx;
    Tensor up_scores = up.forward(score_map, ctx, Mode::Eval, nullptr);

    Mask out(image_h, image_w);
    for (int y = 0; y < image_h; ++y)
        for (int x = 0; x < image_w; ++x)
            out.at(y, x) = up_scores.at(0, y, x) > 0.5f ? 1 : 0;  // tie -> background
    return out;
}

const char* seg_mode_name(SegMode m) {
    switch (m) {
        case SegMode::Matching: return "matching";
        case SegMode::SrofbSupportOnly: return "srofb";
        case SegMode::SrofbSelfRefined: return "srofb-self";
    }
    return "?";
}

SegMode seg_mode_from_name(const std::string& name) {
    if (name == "matching") return SegMode::Matching;
    if (name == "srofb") return SegMode::SrofbSupportOnly;
    if (name == "srofb-self") return SegMode::SrofbSelfRefined;
    throw ConfigError("unknown mode: " + name);
}

Mask segment_episode(const std::vector<Image>& support_images,
                     const std::vector<Mask>& support_masks, const Image& query_image,
                     const Encoder& encoder, const RefineConfig& config, SegMode mode) {
    config.validate();
    if (support_images.empty() || support_images.size() != support_masks.size())
        throw DataError("segment_episode: empty or mismatched supports");

    std::vector<Tensor> sup_feats;
    std::vector<Mask> sup_masks_ds;
    Network::Ctx scratch;
    for (size_t s = 0; s < support_images.size(); ++s) {
        Tensor in = image_to_tensor(support_images[s]);
        sup_feats.push_back(encoder.forward(in, scratch, Mode::Eval));
        sup_masks_ds.push_back(majority_downsample(support_masks[s], sup_feats.back().dim(1),
                                                   sup_feats.back().dim(2)));
    }
    Tensor q_in = image_to_tensor(query_image);
    Tensor q_feat = encoder.forward(q_in, scratch, Mode::Eval);

    std::vector<const Tensor*> feat_ptrs;
    std::vector<const Mask*> mask_ptrs;
    for (size_t s = 0; s < sup_feats.size(); ++s) {
        feat_ptrs.push_back(&sup_feats[s]);
        mask_ptrs.push_back(&sup_masks_ds[s]);
    }
    MaskPrototypes protos = compute_mask_prototypes(feat_ptrs, mask_ptrs);
    Tensor scores = rough_segment(q_feat, protos, config.temperature);

    auto matching_mask = [&]() {
        Tensor fg({1, scores.dim(1), scores.dim(2)});
        for (int y = 0; y < scores.dim(1); ++y)
            for (int x = 0; x < scores.dim(2); ++x) fg.at(0, y, x) = scores.at(1, y, x);
        Layer up = Layer::bilinear_upsample(query_image.height, query_image.width);
        LayerCtx ctx;
        Tensor up_scores = up.forward(fg, ctx, Mode::Eval, nullptr);
        Mask out(query_image.height, query_image.width);
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(y, x) = up_scores.at(0, y, x) > 0.5f ? 1 : 0;
        return out;
    };

    if (mode == SegMode::Matching) return matching_mask();

    int iterations = support_images.size() == 1 ? config.iterations_1shot
                                                : config.iterations_kshot;
    PixelSampleSet support_samples;
    try {
        support_samples = gather_support_pixels(feat_ptrs, mask_ptrs, config);
    } catch (const MissingForegroundError&) {
        return matching_mask();
    }

    PixelSampleSet samples = support_samples;
    if (mode == SegMode::SrofbSelfRefined) {
        PixelSampleSet query_samples = select_confident_pixels(scores, q_feat, config);
        samples.append(query_samples);
    }

    OFBClassifier clf;
    try {
        clf = refine_classifier(samples, config, encoder.out_channels, iterations);
    } catch (const DegenerateSampleError&) {
        try {
            clf = refine_classifier(support_samples, config, encoder.out_channels, iterations);
        } catch (const DegenerateSampleError&) {
            return matching_mask();
        }
    }
    return predict_mask(clf, q_feat, query_image.height, query_image.width);
}

}  // namespace fss
