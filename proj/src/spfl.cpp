#include "fss/spfl.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fss/losses.hpp"

namespace fss {

MaskPrototypes compute_mask_prototypes(const std::vector<const Tensor*>& support_features,
                                       const std::vector<const Mask*>& support_masks_feat_res) {
    if (support_features.empty() || support_features.size() != support_masks_feat_res.size())
        throw DimensionError("compute_mask_prototypes: empty or mismatched supports");
    int C = support_features[0]->dim(0);
    std::vector<double> acc_fg(static_cast<size_t>(C), 0.0), acc_bg(static_cast<size_t>(C), 0.0);
    int64_t n_fg = 0, n_bg = 0;
    for (size_t s = 0; s < support_features.size(); ++s) {
        const Tensor& f = *support_features[s];
        const Mask& m = *support_masks_feat_res[s];
        if (f.ndim() != 3 || f.dim(0) != C)
            throw DimensionError("compute_mask_prototypes: channel mismatch");
        if (m.height != f.dim(1) || m.width != f.dim(2))
            throw DimensionError("compute_mask_prototypes: mask must be at feature resolution");
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                auto& acc = m.at(y, x) ? acc_fg : acc_bg;
                (m.at(y, x) ? n_fg : n_bg)++;
                for (int c = 0; c < C; ++c) acc[static_cast<size_t>(c)] += f.at(c, y, x);
            }
    }
    if (n_fg == 0)
        throw MissingForegroundError("compute_mask_prototypes: no foreground cell in any support");
    if (n_bg == 0)
        throw DataError("compute_mask_prototypes: no background cell in any support");
    MaskPrototypes p;
    p.fg_count = n_fg;
    p.bg_count = n_bg;
    p.p_fg.resize(static_cast<size_t>(C));
    p.p_bg.resize(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        p.p_fg[static_cast<size_t>(c)] = static_cast<float>(acc_fg[static_cast<size_t>(c)] / n_fg);
        p.p_bg[static_cast<size_t>(c)] = static_cast<float>(acc_bg[static_cast<size_t>(c)] / n_bg);
    }
    return p;
}

MaskPrototypes compute_mask_prototypes(const Tensor& features, const Mask& mask_feat_res) {
    return compute_mask_prototypes({&features}, {&mask_feat_res});
}

std::array<double, 2> paired_similarity(std::span<const float> pixel_feature,
                                        const MaskPrototypes& protos) {
    return {cosine_similarity(pixel_feature, protos.p_bg),
            cosine_similarity(pixel_feature, protos.p_fg)};
}

SegLossResult seg_loss(const Tensor& query_features, const MaskPrototypes& protos,
                       const Mask& gt_feat_res, float temperature) {
    if (temperature <= 0.0f) throw ConfigError("seg_loss: temperature must be positive");
    if (query_features.ndim() != 3) throw DimensionError("seg_loss: features (C,H,W)");
    int C = query_features.dim(0), h = query_features.dim(1), w = query_features.dim(2);
    if (gt_feat_res.height != h || gt_feat_res.width != w)
        throw DimensionError("seg_loss: gt mask must be at feature resolution");

    SegLossResult res;
    res.grad_features = Tensor::zeros(query_features.shape);
    res.grad_p_fg.assign(static_cast<size_t>(C), 0.0f);
    res.grad_p_bg.assign(static_cast<size_t>(C), 0.0f);

    double npfg2 = 0.0, npbg2 = 0.0;
    for (int c = 0; c < C; ++c) {
        npfg2 += static_cast<double>(protos.p_fg[static_cast<size_t>(c)]) * protos.p_fg[static_cast<size_t>(c)];
        npbg2 += static_cast<double>(protos.p_bg[static_cast<size_t>(c)]) * protos.p_bg[static_cast<size_t>(c)];
    }
    double npfg = std::sqrt(npfg2), npbg = std::sqrt(npbg2);

    std::vector<double> gpfg(static_cast<size_t>(C), 0.0), gpbg(static_cast<size_t>(C), 0.0);
    const int64_t n_pix = static_cast<int64_t>(h) * w;
    double total = 0.0;
    std::vector<float> f(static_cast<size_t>(C));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double nf2 = 0.0, dot_fg = 0.0, dot_bg = 0.0;
            for (int c = 0; c < C; ++c) {
                float v = query_features.at(c, y, x);
                f[static_cast<size_t>(c)] = v;
                nf2 += static_cast<double>(v) * v;
                dot_fg += static_cast<double>(v) * protos.p_fg[static_cast<size_t>(c)];
                dot_bg += static_cast<double>(v) * protos.p_bg[static_cast<size_t>(c)];
            }
            double nf = std::sqrt(nf2);
            bool fg_ok = nf > 1e-12 && npfg > 1e-12;
            bool bg_ok = nf > 1e-12 && npbg > 1e-12;
            double s1 = fg_ok ? dot_fg / (nf * npfg) : 0.0;
            double s0 = bg_ok ? dot_bg / (nf * npbg) : 0.0;

            // 2-way stable softmax of s/T
            double l0 = s0 / temperature, l1 = s1 / temperature;
            double m = std::max(l0, l1);
            double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            double z = e0 + e1;
            double p1 = e1 / z, p0 = e0 / z;
            int label = gt_feat_res.at(y, x) ? 1 : 0;
            total += -(std::log(label == 1 ? p1 : p0));

            double ds0 = (p0 - (label == 0 ? 1.0 : 0.0)) / (temperature * static_cast<double>(n_pix));
            double ds1 = (p1 - (label == 1 ? 1.0 : 0.0)) / (temperature * static_cast<double>(n_pix));

            for (int c = 0; c < C; ++c) {
                double fv = f[static_cast<size_t>(c)];
                double g = 0.0;
                if (fg_ok) {
                    double pv = protos.p_fg[static_cast<size_t>(c)];
                    g += ds1 * (pv / (nf * npfg) - s1 * fv / nf2);
                    gpfg[static_cast<size_t>(c)] += ds1 * (fv / (nf * npfg) - s1 * pv / npfg2);
                }
                if (bg_ok) {
                    double pv = protos.p_bg[static_cast<size_t>(c)];
                    g += ds0 * (pv / (nf * npbg) - s0 * fv / nf2);
                    gpbg[static_cast<size_t>(c)] += ds0 * (fv / (nf * npbg) - s0 * pv / npbg2);
                }
                res.grad_features.at(c, y, x) += static_cast<float>(g);
            }
        }
    }
    for (int c = 0; c < C; ++c) {
        res.grad_p_fg[static_cast<size_t>(c)] = static_cast<float>(gpfg[static_cast<size_t>(c)]);
        res.grad_p_bg[static_cast<size_t>(c)] = static_cast<float>(gpbg[static_cast<size_t>(c)]);
    }
    res.loss = total / static_cast<double>(n_pix);
    return res;
}

void mask_prototypes_backward(const MaskPrototypes& protos, std::span<const float> grad_p_fg,
                              std::span<const float> grad_p_bg,
                              const std::vector<const Mask*>& support_masks_feat_res,
                              std::vector<Tensor>& grad_support_features) {
    if (grad_support_features.size() != support_masks_feat_res.size())
        throw DimensionError("mask_prototypes_backward: support count mismatch");
    int C = static_cast<int>(grad_p_fg.size());
    for (size_t s = 0; s < support_masks_feat_res.size(); ++s) {
        const Mask& m = *support_masks_feat_res[s];
        Tensor& gf = grad_support_features[s];
        if (gf.ndim() != 3 || gf.dim(0) != C || gf.dim(1) != m.height || gf.dim(2) != m.width)
            throw DimensionError("mask_prototypes_backward: grad tensor shape mismatch");
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                bool fg = m.at(y, x) != 0;
                const auto& gp = fg ? grad_p_fg : grad_p_bg;
                double denom = static_cast<double>(fg ? protos.fg_count : protos.bg_count);
                for (int c = 0; c < C; ++c)
                    gf.at(c, y, x) += static_cast<float>(gp[static_cast<size_t>(c)] / denom);
            }
    }
}

PseudoClsResult pseudo_cls_loss(const Tensor& logits, std::span<const int32_t> labels) {
    if (logits.ndim() != 3) throw DimensionError("pseudo_cls_loss: logits (K,H,W)");
    int K = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    if (labels.size() != static_cast<size_t>(h) * w)
        throw DimensionError("pseudo_cls_loss: label map size mismatch");
    PseudoClsResult res;
    res.grad_logits = Tensor::zeros(logits.shape);
    const int64_t n = static_cast<int64_t>(h) * w;
    double total = 0.0;
    std::vector<double> col(static_cast<size_t>(K));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int32_t label = labels[static_cast<size_t>(y) * w + x];
            if (label < 0 || label >= K)
                throw LabelError("pseudo_cls_loss: label exceeds channel count");
            double mx = -1e300;
            for (int k = 0; k < K; ++k) {
                col[static_cast<size_t>(k)] = logits.at(k, y, x);
                mx = std::max(mx, col[static_cast<size_t>(k)]);
            }
            double z = 0.0;
            for (int k = 0; k < K; ++k) z += std::exp(col[static_cast<size_t>(k)] - mx);
            double logz = mx + std::log(z);
            total += logz - col[static_cast<size_t>(label)];
            for (int k = 0; k < K; ++k) {
                double p = std::exp(col[static_cast<size_t>(k)] - logz);
                res.grad_logits.at(k, y, x) = static_cast<float>(
                    (p - (k == label ? 1.0 : 0.0)) / static_cast<double>(n));
            }
        }
    }
    res.loss = total / static_cast<double>(n);
    return res;
}

double total_pseudo_loss(std::span<const double> per_level_losses, const LossWeights& weights) {
    weights.validate();
    if (per_level_losses.size() != weights.gamma.size())
        throw ConfigError("total_pseudo_loss: level/weight count mismatch");
    double total = 0.0;
    for (size_t l = 0; l < per_level_losses.size(); ++l)
        total += weights.gamma[l] * per_level_losses[l];
    return total;
}

std::string TrainConfig::config_hash() const {
    nlohmann::json j;
    j["pairs"] = pairs_per_batch;
    j["extras"] = extra_images_per_batch;
    j["iters"] = total_iterations;
    j["lr"] = sgd.learning_rate;
    j["momentum"] = sgd.momentum;
    j["wd"] = sgd.weight_decay;
    j["decay_every"] = sgd.decay_every;
    j["decay_factor"] = sgd.decay_factor;
    j["seed"] = seed;
    j["temperature"] = temperature;
    j["augment_pairs"] = augment_pairs;
    j["augment_extras"] = augment_extras;
    return hex64(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// training engine
// ---------------------------------------------------------------------------

namespace {

struct PairPlan {
    int support_idx, query_idx;
    bool flip_support, flip_query;
};

struct ExtraPlan {
    int idx;
    bool flip;
    float brightness, contrast;
    float crop_x0, crop_y0, crop_scale;
};

struct BnSnapshot {
    // (layer index, mean, var) for each train-mode BN layer in one context
    std::vector<std::tuple<size_t, std::vector<float>, std::vector<float>>> entries;
};

BnSnapshot snapshot_bn(const Network& net, const Network::Ctx& ctx) {
    BnSnapshot snap;
    for (size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].kind == LayerKind::BatchNorm2d && ctx[i].mode == Mode::Train)
            snap.entries.emplace_back(i, ctx[i].bn_mean, ctx[i].bn_var);
    return snap;
}

void apply_bn(Network& net, const BnSnapshot& snap) {
    for (const auto& [i, mean, var] : snap.entries) {
        Layer& l = net.layers[i];
        int C = l.weight.dim(0);
        for (int c = 0; c < C; ++c) {
            l.running_mean.at(c) = (1.0f - l.bn_momentum) * l.running_mean.at(c) +
                                   l.bn_momentum * mean[static_cast<size_t>(c)];
            l.running_var.at(c) = (1.0f - l.bn_momentum) * l.running_var.at(c) +
                                  l.bn_momentum * var[static_cast<size_t>(c)];
        }
        l.bn_initialized = true;
    }
}

// Work product of one batch item, reduced on the main thread in item order.
struct ItemResult {
    Network::GradBuffer encoder_grads;
    std::vector<Network::GradBuffer> decoder_grads;
    std::vector<BnSnapshot> bn;  // encoder ctxs first, then decoders
    double seg_loss = 0.0;
    double pseudo_loss = 0.0;  // already gamma-weighted
    bool valid = false;
};

struct Engine {
    const TrainSet& data;
    const PrototypeHierarchy* hierarchy;
    TrainConfig cfg;
    LossWeights weights;
    Encoder encoder;
    std::vector<Decoder> decoders;
    std::vector<std::vector<int>> pair_pool_by_class;  // eligible episode items
    std::vector<int> class_ids;                        // classes with >= 2 eligible items
    int feat_h = 0, feat_w = 0;

    Engine(const TrainSet& d, const PrototypeHierarchy* h, const TrainConfig& c,
           const LossWeights& w)
        : data(d), hierarchy(h), cfg(c), weights(w) {
        cfg.validate();
        if (data.items.empty()) throw DataError("training set is empty");
        Rng init_rng(Rng::derive(cfg.seed, 0xec0de));
        encoder = Encoder::tiny(init_rng);
        feat_h = encoder.feature_h(data.image_h);
        feat_w = encoder.feature_w(data.image_w);
        if (hierarchy) {
            weights.validate();
            if (static_cast<size_t>(hierarchy->num_levels()) != weights.gamma.size())
                throw ConfigError("gamma count must match hierarchy levels");
            for (int l = 0; l < hierarchy->num_levels(); ++l)
                decoders.push_back(Decoder::make(encoder.out_channels, hierarchy->label_count(l),
                                                 data.image_h, data.image_w, init_rng));
            for (const auto& item : data.items)
                if (!item.pseudo)
                    throw DataError("train_spfl: pseudo labels missing for a training image");
        }

        int max_class = -1;
        for (const auto& item : data.items) max_class = std::max(max_class, item.class_id);
        pair_pool_by_class.assign(static_cast<size_t>(max_class + 1), {});
        for (size_t i = 0; i < data.items.size(); ++i) {
            const auto& item = data.items[i];
            if (item.class_id < 0) continue;
            Mask ds = majority_downsample(item.mask, feat_h, feat_w);
            int64_t fg = ds.count_fg();
            if (fg > 0 && fg < static_cast<int64_t>(feat_h) * feat_w)
                pair_pool_by_class[static_cast<size_t>(item.class_id)].push_back(
                    static_cast<int>(i));
        }
        for (size_t c = 0; c < pair_pool_by_class.size(); ++c)
            if (pair_pool_by_class[c].size() >= 2) class_ids.push_back(static_cast<int>(c));
        if (class_ids.empty()) throw DataError("no class has two usable support-query images");
    }

    std::vector<ParamRef> all_params() {
        std::vector<ParamRef> p = encoder.net.params("encoder.");
        for (size_t i = 0; i < decoders.size(); ++i) {
            auto dp = decoders[i].net.params("decoder" + std::to_string(i) + ".");
            p.insert(p.end(), dp.begin(), dp.end());
        }
        return p;
    }

    ItemResult run_pair(const PairPlan& plan) const {
        ItemResult out;
        const TrainItem& sup = data.items[static_cast<size_t>(plan.support_idx)];
        const TrainItem& qry = data.items[static_cast<size_t>(plan.query_idx)];
        Image s_img = plan.flip_support ? flip_horizontal(sup.image) : sup.image;
        Mask s_mask = plan.flip_support ? flip_horizontal(sup.mask) : sup.mask;
        Image q_img = plan.flip_query ? flip_horizontal(qry.image) : qry.image;
        Mask q_gt = plan.flip_query ? flip_horizontal(qry.mask) : qry.mask;

        Tensor s_in = image_to_tensor(s_img);
        Tensor q_in = image_to_tensor(q_img);
        Network::Ctx s_ctx, q_ctx;
        Tensor s_feat = encoder.forward(s_in, s_ctx, Mode::Train);
        Tensor q_feat = encoder.forward(q_in, q_ctx, Mode::Train);
        Mask s_mask_ds = majority_downsample(s_mask, feat_h, feat_w);
        Mask q_gt_ds = majority_downsample(q_gt, feat_h, feat_w);

        MaskPrototypes protos = compute_mask_prototypes(s_feat, s_mask_ds);
        SegLossResult seg = seg_loss(q_feat, protos, q_gt_ds, cfg.temperature);
        out.seg_loss = seg.loss;

        float scale = weights.seg_weight / static_cast<float>(cfg.pairs_per_batch);
        out.encoder_grads = encoder.net.make_grad_buffer();
        // query branch
        Tensor q_grad = seg.grad_features;
        for (auto& v : q_grad.data) v *= scale;
        encoder.backward(q_grad, q_ctx, &out.encoder_grads);
        // support branch, through the pooled prototypes
        std::vector<Tensor> s_grads;
        s_grads.push_back(Tensor::zeros(s_feat.shape));
        mask_prototypes_backward(protos, seg.grad_p_fg, seg.grad_p_bg, {&s_mask_ds}, s_grads);
        for (auto& v : s_grads[0].data) v *= scale;
        encoder.backward(s_grads[0], s_ctx, &out.encoder_grads);

        out.bn.push_back(snapshot_bn(encoder.net, s_ctx));
        out.bn.push_back(snapshot_bn(encoder.net, q_ctx));
        out.valid = true;
        return out;
    }

    ItemResult run_extra(const ExtraPlan& plan) const {
        ItemResult out;
        const TrainItem& item = data.items[static_cast<size_t>(plan.idx)];
        Image img = item.image;
        std::vector<std::vector<int32_t>> labels;
        labels.reserve(static_cast<size_t>(hierarchy->num_levels()));
        for (int l = 0; l < hierarchy->num_levels(); ++l)
            labels.push_back(item.pseudo->levels[static_cast<size_t>(l)]);

        if (plan.flip) {
            img = flip_horizontal(img);
            for (auto& lv : labels) lv = flip_horizontal_labels(lv, feat_h, feat_w);
        }
        if (plan.crop_scale < 1.0f) {
            img = crop_resize(img, plan.crop_x0, plan.crop_y0, plan.crop_scale);
            for (auto& lv : labels)
                lv = crop_resize_labels(lv, feat_h, feat_w, plan.crop_x0, plan.crop_y0,
                                        plan.crop_scale);
        }
        img = adjust_brightness_contrast(img, plan.brightness, plan.contrast);

        Tensor in = image_to_tensor(img);
        Network::Ctx enc_ctx;
        Tensor feat = encoder.forward(in, enc_ctx, Mode::Train);

        out.encoder_grads = encoder.net.make_grad_buffer();
        Tensor feat_grad = Tensor::zeros(feat.shape);
        std::vector<BnSnapshot> dec_bn;
        for (int l = 0; l < hierarchy->num_levels(); ++l) {
            const Decoder& dec = decoders[static_cast<size_t>(l)];
            Network::Ctx dec_ctx;
            Tensor logits = dec.net.forward(feat, dec_ctx, Mode::Train);
            // labels live at feature resolution; the loss is taken at image
            // resolution against the upsampled logits
            std::vector<int32_t> up = nn_resample_labels(labels[static_cast<size_t>(l)], feat_h,
                                                         feat_w, data.image_h, data.image_w);
            PseudoClsResult pc = pseudo_cls_loss(logits, up);
            double gamma = weights.gamma[static_cast<size_t>(l)];
            out.pseudo_loss += gamma * pc.loss;
            float scale = static_cast<float>(gamma / cfg.extra_images_per_batch);
            for (auto& v : pc.grad_logits.data) v *= scale;
            out.decoder_grads.push_back(dec.net.make_grad_buffer());
            Tensor gin = dec.net.backward(pc.grad_logits, dec_ctx, &out.decoder_grads.back());
            feat_grad.add_scaled(gin, 1.0f);
            dec_bn.push_back(snapshot_bn(dec.net, dec_ctx));
        }
        encoder.backward(feat_grad, enc_ctx, &out.encoder_grads);
        out.bn.push_back(snapshot_bn(encoder.net, enc_ctx));
        for (auto& s : dec_bn) out.bn.push_back(std::move(s));
        out.valid = true;
        return out;
    }

    Checkpoint run(TrainLog* log) {
        auto params = all_params();
        SgdState sgd_state;
        Rng sample_rng(Rng::derive(cfg.seed, 0x5a3b1e));
        bool with_extras = hierarchy && cfg.extra_images_per_batch > 0;

        for (long iter = 0; iter < cfg.total_iterations; ++iter) {
            // batch assembly on the main thread; workers stay pure
            std::vector<PairPlan> pairs;
            for (int p = 0; p < cfg.pairs_per_batch; ++p) {
                int c = class_ids[static_cast<size_t>(
                    sample_rng.uniform_int(0, static_cast<int>(class_ids.size()) - 1))];
                const auto& pool = pair_pool_by_class[static_cast<size_t>(c)];
                auto pick = sample_rng.sample_without_replacement(static_cast<int>(pool.size()), 2);
                PairPlan plan;
                plan.support_idx = pool[static_cast<size_t>(pick[0])];
                plan.query_idx = pool[static_cast<size_t>(pick[1])];
                plan.flip_support = cfg.augment_pairs && sample_rng.bernoulli(0.5);
                plan.flip_query = cfg.augment_pairs && sample_rng.bernoulli(0.5);
                pairs.push_back(plan);
            }
            std::vector<ExtraPlan> extras;
            if (with_extras) {
                for (int e = 0; e < cfg.extra_images_per_batch; ++e) {
                    ExtraPlan plan;
                    plan.idx = sample_rng.uniform_int(0, static_cast<int>(data.items.size()) - 1);
                    plan.flip = cfg.augment_extras && sample_rng.bernoulli(0.5);
                    if (cfg.augment_extras) {
                        plan.brightness = static_cast<float>(sample_rng.uniform(-0.2, 0.2));
                        plan.contrast = static_cast<float>(sample_rng.uniform(0.8, 1.2));
                        plan.crop_scale = static_cast<float>(sample_rng.uniform(0.8, 1.0));
                        plan.crop_x0 =
                            static_cast<float>(sample_rng.uniform(0.0, 1.0 - plan.crop_scale));
                        plan.crop_y0 =
                            static_cast<float>(sample_rng.uniform(0.0, 1.0 - plan.crop_scale));
                    } else {
                        plan.brightness = 0.0f;
                        plan.contrast = 1.0f;
                        plan.crop_scale = 1.0f;
                        plan.crop_x0 = plan.crop_y0 = 0.0f;
                    }
                    extras.push_back(plan);
                }
            }

            int n_items = static_cast<int>(pairs.size() + extras.size());
            std::vector<ItemResult> results(static_cast<size_t>(n_items));
            parallel_for(n_items, cfg.threads, [&](int i) {
                if (i < static_cast<int>(pairs.size()))
                    results[static_cast<size_t>(i)] = run_pair(pairs[static_cast<size_t>(i)]);
                else
                    results[static_cast<size_t>(i)] =
                        run_extra(extras[static_cast<size_t>(i - pairs.size())]);
            });

            // ordered reduction: gradients, BN stats, losses
            double seg_total = 0.0, pseudo_total = 0.0;
            for (auto& r : results) {
                if (!r.valid) continue;
                encoder.net.accumulate(r.encoder_grads);
                for (size_t d = 0; d < r.decoder_grads.size(); ++d)
                    decoders[d].net.accumulate(r.decoder_grads[d]);
                seg_total += r.seg_loss;
                pseudo_total += r.pseudo_loss;
            }
            for (auto& r : results) {
                size_t bi = 0;
                // encoder snapshots precede decoder snapshots within an item
                size_t enc_snaps = r.decoder_grads.empty() ? r.bn.size() : 1;
                for (; bi < enc_snaps && bi < r.bn.size(); ++bi)
                    apply_bn(encoder.net, r.bn[bi]);
                for (size_t d = 0; bi < r.bn.size(); ++bi, ++d)
                    apply_bn(decoders[d].net, r.bn[bi]);
            }

            double seg_mean = seg_total / cfg.pairs_per_batch;
            double pseudo_mean = with_extras ? pseudo_total / cfg.extra_images_per_batch : 0.0;
            if (log) {
                log->seg.push_back(seg_mean);
                log->pseudo.push_back(pseudo_mean);
                log->total.push_back(weights.seg_weight * seg_mean + pseudo_mean);
            }
            sgd_step(params, sgd_state, cfg.sgd, iter);
        }

        Checkpoint ckpt;
        ckpt.kind = hierarchy ? "spfl" : "baseline";
        ckpt.encoder = std::move(encoder);
        ckpt.decoders = std::move(decoders);
        ckpt.iteration = cfg.total_iterations;
        ckpt.seed = cfg.seed;
        ckpt.config_hash = cfg.config_hash();
        return ckpt;
    }
};

}  // namespace

Checkpoint train_baseline(const TrainSet& data, const TrainConfig& config, TrainLog* log) {
    TrainConfig cfg = config;
    cfg.extra_images_per_batch = 0;
    Engine engine(data, nullptr, cfg, LossWeights{});
    return engine.run(log);
}

Checkpoint train_spfl(const TrainSet& data, const PrototypeHierarchy& hierarchy,
                      const TrainConfig& config, const LossWeights& weights, TrainLog* log) {
    Engine engine(data, &hierarchy, config, weights);
    return engine.run(log);
}

}  // namespace fss
