#pragma once

#include <vector>

#include "fss/layers.hpp"

namespace fss {

struct SgdConfig {
    float learning_rate = 1e-3f;
    float momentum = 0.9f;
    float weight_decay = 1e-4f;
    long decay_every = 2000;   // step-decay period
    float decay_factor = 0.1f;

    void validate() const {
        if (learning_rate <= 0.0f) throw ConfigError("sgd: learning_rate must be positive");
        if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("sgd: momentum must be in [0,1)");
        if (weight_decay < 0.0f) throw ConfigError("sgd: weight_decay must be nonnegative");
        if (decay_every <= 0) throw ConfigError("sgd: decay_every must be positive");
        if (decay_factor <= 0.0f) throw ConfigError("sgd: decay_factor must be positive");
    }
};

float effective_lr(const SgdConfig& cfg, long step);

// Momentum buffers, one per parameter, allocated lazily on first step.
struct SgdState {
    std::vector<Tensor> velocity;
};

// v = mu*v + (g + wd*w); w -= lr_eff*v. Gradients are zeroed afterward.
void sgd_step(std::vector<ParamRef>& params, SgdState& state, const SgdConfig& cfg, long step);

}  // namespace fss
