#pragma once

#include <string>
#include <vector>

#include "fss/tensor.hpp"

namespace fss {

enum class LayerKind { Conv2d, Linear, ReLU, BatchNorm2d, Dropout, BilinearUpsample };
enum class Mode { Train, Eval };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

// Per-call activation record. Forward fills it, backward consumes it, so a
// frozen layer can serve many concurrent inputs, each with its own context.
struct LayerCtx {
    Tensor input;                      // cached input
    std::vector<float> bn_mean;        // per-channel batch stats (train mode)
    std::vector<float> bn_var;
    std::vector<uint8_t> dropout_mask; // 1 = kept
    bool reuse_dropout = false;        // replay the stored mask (gradient checks)
    Mode mode = Mode::Train;
};

// One differentiable layer. Parameters live in `weight`/`bias`
// (gamma/beta for batch norm); matching grad tensors accumulate.
struct Layer {
    LayerKind kind;

    Tensor weight, bias;
    Tensor grad_weight, grad_bias;

    // conv
    int stride = 1;
    int pad = 0;
    // batch norm
    Tensor running_mean, running_var;
    float bn_momentum = 0.1f;
    float bn_eps = 1e-5f;
    bool bn_initialized = false;
    // dropout
    float dropout_rate = 0.0f;
    // upsample target
    int out_h = 0, out_w = 0;

    static Layer conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng);
    static Layer linear(int in_dim, int out_dim, Rng& rng);
    static Layer relu();
    static Layer batch_norm2d(int channels);
    static Layer dropout(float rate);
    static Layer bilinear_upsample(int out_h, int out_w);

    // Pure w.r.t. the layer: parameters and running stats are only read.
    // Train-mode batch-norm records its batch stats in ctx; the owner applies
    // them via apply_bn_update after the step's forward passes are ordered.
    Tensor forward(const Tensor& x, LayerCtx& ctx, Mode mode, Rng* rng) const;

    // Returns grad wrt input; accumulates parameter grads into gw/gb when the
    // layer has parameters (pass nullptr to skip).
    Tensor backward(const Tensor& grad_out, const LayerCtx& ctx, Tensor* gw, Tensor* gb) const;

    void apply_bn_update(const LayerCtx& ctx);
    bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Linear ||
                                     kind == LayerKind::BatchNorm2d; }
};

struct ParamRef {
    Tensor* value;
    Tensor* grad;
    std::string name;
};

// Sequential stack of layers with per-call contexts and per-item gradient
// buffers (two slots per layer) so batch items can run on worker threads and
// be reduced in a fixed order afterwards.
struct Network {
    std::vector<Layer> layers;
    using Ctx = std::vector<LayerCtx>;
    using GradBuffer = std::vector<Tensor>;

    Tensor forward(const Tensor& x, Ctx& ctx, Mode mode, Rng* rng = nullptr) const;
    Tensor backward(const Tensor& grad_out, const Ctx& ctx, GradBuffer* gb) const;

    GradBuffer make_grad_buffer() const;
    void accumulate(const GradBuffer& gb);           // into layers' grad tensors
    void add_buffers(GradBuffer& dst, const GradBuffer& src) const;
    void zero_grads();
    void update_bn_stats(const Ctx& ctx);
    std::vector<ParamRef> params(const std::string& prefix = "");
};

}  // namespace fss
