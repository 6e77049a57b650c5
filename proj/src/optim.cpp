#include "fss/optim.hpp"

#include <cmath>

namespace fss {

float effective_lr(const SgdConfig& cfg, long step) {
    long k = step / cfg.decay_every;
    return cfg.learning_rate * static_cast<float>(std::pow(cfg.decay_factor, static_cast<double>(k)));
}

void sgd_step(std::vector<ParamRef>& params, SgdState& state, const SgdConfig& cfg, long step) {
    cfg.validate();
    if (state.velocity.size() != params.size()) {
        state.velocity.clear();
        for (auto& p : params) state.velocity.push_back(Tensor::zeros(p.value->shape));
    }
    float lr = effective_lr(cfg, step);
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& w = *params[i].value;
        Tensor& g = *params[i].grad;
        Tensor& v = state.velocity[i];
        for (size_t j = 0; j < w.data.size(); ++j) {
            float grad = g.data[j] + cfg.weight_decay * w.data[j];
            v.data[j] = cfg.momentum * v.data[j] + grad;
            w.data[j] -= lr * v.data[j];
        }
        g.fill(0.0f);
    }
}

}  // namespace fss
