#pragma once

#include <span>
#include <vector>

#include "fss/tensor.hpp"

namespace fss {

// a.b / (|a||b|), 0 if either norm < 1e-12. Accumulates in double.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Gradient of cosine_similarity w.r.t. both arguments, scaled by upstream.
// Zero-norm convention propagates zero gradient.
void cosine_similarity_backward(std::span<const float> a, std::span<const float> b,
                                double upstream, std::span<float> grad_a,
                                std::span<float> grad_b);

// Stable softmax of logits/temperature. temperature <= 0 is a config error.
std::vector<float> softmax(std::span<const float> logits, float temperature = 1.0f);

// Channel-wise mean of features (C,H,W) over cells where labels == region_id.
// labels has H*W entries, row-major. Empty region -> EmptyRegionError.
std::vector<float> mask_average_pool(const Tensor& features, std::span<const int32_t> labels,
                                     int32_t region_id);

struct CrossEntropyResult {
    double loss = 0.0;
    Tensor grad_logits;  // (K,N), already divided by N
};

// logits (K,N) -> mean over columns of -log softmax[label]. Analytic grad.
CrossEntropyResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

struct BceResult {
    double loss = 0.0;
    std::vector<float> grad_scores;  // d(mean loss)/d(score)
};

// scores in (0,1) clamped to [1e-7, 1-1e-7] before the log; labels 0/1.
BceResult binary_cross_entropy(std::span<const float> scores, std::span<const float> labels);

}  // namespace fss
