#include "fss/losses.hpp"

#include <algorithm>
#include <cmath>

namespace fss {

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

void cosine_similarity_backward(std::span<const float> a, std::span<const float> b,
                                double upstream, std::span<float> grad_a,
                                std::span<float> grad_b) {
    if (a.size() != b.size() || grad_a.size() != a.size() || grad_b.size() != b.size())
        throw DimensionError("cosine_similarity_backward: length mismatch");
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na2 += static_cast<double>(a[i]) * a[i];
        nb2 += static_cast<double>(b[i]) * b[i];
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na < 1e-12 || nb < 1e-12) return;  // defined-zero region, zero gradient
    double inv = 1.0 / (na * nb);
    double cos = dot * inv;
    for (size_t i = 0; i < a.size(); ++i) {
        grad_a[i] += static_cast<float>(upstream * (b[i] * inv - cos * a[i] / na2));
        grad_b[i] += static_cast<float>(upstream * (a[i] * inv - cos * b[i] / nb2));
    }
}

std::vector<float> softmax(std::span<const float> logits, float temperature) {
    if (logits.empty()) throw DimensionError("softmax: empty logits");
    if (temperature <= 0.0f) throw ConfigError("softmax: temperature must be positive");
    double mx = -1e300;
    for (float v : logits) mx = std::max(mx, static_cast<double>(v) / temperature);
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) / temperature - mx);
        sum += e[i];
    }
    std::vector<float> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(e[i] / sum);
    return out;
}

std::vector<float> mask_average_pool(const Tensor& features, std::span<const int32_t> labels,
                                     int32_t region_id) {
    if (features.ndim() != 3) throw DimensionError("mask_average_pool: features must be (C,H,W)");
    int C = features.dim(0), H = features.dim(1), W = features.dim(2);
    if (labels.size() != static_cast<size_t>(H) * W)
        throw DimensionError("mask_average_pool: mask size does not match features");
    std::vector<double> acc(static_cast<size_t>(C), 0.0);
    int64_t count = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (labels[static_cast<size_t>(y) * W + x] != region_id) continue;
            ++count;
            for (int c = 0; c < C; ++c) acc[static_cast<size_t>(c)] += features.at(c, y, x);
        }
    }
    if (count == 0) throw EmptyRegionError("mask_average_pool: region id not present");
    std::vector<float> out(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c)
        out[static_cast<size_t>(c)] = static_cast<float>(acc[static_cast<size_t>(c)] / count);
    return out;
}

CrossEntropyResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
    if (logits.ndim() != 2) throw DimensionError("cross_entropy_loss: logits must be (K,N)");
    int K = logits.dim(0), N = logits.dim(1);
    if (labels.size() != static_cast<size_t>(N))
        throw DimensionError("cross_entropy_loss: label count mismatch");
    CrossEntropyResult res;
    res.grad_logits = Tensor::zeros({K, N});
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        int y = labels[static_cast<size_t>(n)];
        if (y < 0 || y >= K) throw LabelError("cross_entropy_loss: label out of range");
        double mx = -1e300;
        for (int k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(logits.at(k, n)));
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += std::exp(static_cast<double>(logits.at(k, n)) - mx);
        double logz = mx + std::log(sum);
        total += logz - logits.at(y, n);
        for (int k = 0; k < K; ++k) {
            double p = std::exp(static_cast<double>(logits.at(k, n)) - logz);
            res.grad_logits.at(k, n) =
                static_cast<float>((p - (k == y ? 1.0 : 0.0)) / N);
        }
    }
    res.loss = total / N;
    return res;
}

BceResult binary_cross_entropy(std::span<const float> scores, std::span<const float> labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DimensionError("binary_cross_entropy: length mismatch");
    const double lo = 1e-7, hi = 1.0 - 1e-7;
    size_t n = scores.size();
    BceResult res;
    res.grad_scores.assign(n, 0.0f);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double s = std::clamp(static_cast<double>(scores[i]), lo, hi);
        double y = labels[i];
        total += -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
        res.grad_scores[i] =
            static_cast<float>((-y / s + (1.0 - y) / (1.0 - s)) / static_cast<double>(n));
    }
    res.loss = total / static_cast<double>(n);
    return res;
}

}  // namespace fss
