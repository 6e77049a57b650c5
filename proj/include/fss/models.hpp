#pragma once

#include <string>
#include <vector>

#include "fss/layers.hpp"

namespace fss {

// Feature encoder. The default trains from random init:
//   conv3x3(3->16)+BN+ReLU, conv3x3(16->32, stride 2)+BN+ReLU, conv3x3(32->32)+BN+ReLU
// output stride 2, C=32. The identity variant passes precomputed features
// through unchanged (stride 1, configurable channel count).
struct Encoder {
    Network net;
    bool identity = false;
    int out_channels = 32;
    int output_stride = 2;

    static Encoder tiny(Rng& rng);
    static Encoder make_identity(int channels);

    Tensor forward(const Tensor& x, Network::Ctx& ctx, Mode mode, Rng* rng = nullptr) const {
        if (identity) return x;
        return net.forward(x, ctx, mode, rng);
    }
    Tensor backward(const Tensor& gout, const Network::Ctx& ctx, Network::GradBuffer* gb) const {
        if (identity) return gout;
        return net.backward(gout, ctx, gb);
    }
    int feature_h(int image_h) const { return identity ? image_h : image_h / output_stride; }
    int feature_w(int image_w) const { return identity ? image_w : image_w / output_stride; }
};

// Per-level pseudo-classification head:
//   conv3x3(C->C)+BN+ReLU, conv3x3(C->C)+BN+ReLU, conv1x1(C->num_labels),
//   bilinear upsample to image size. Training-only; discarded at inference.
struct Decoder {
    Network net;
    int num_labels = 0;

    static Decoder make(int channels, int num_labels, int image_h, int image_w, Rng& rng);
};

struct Checkpoint {
    std::string kind;  // "baseline" or "spfl"
    Encoder encoder;
    std::vector<Decoder> decoders;
    long iteration = 0;
    uint64_t seed = 0;
    std::string config_hash;

    uint64_t param_hash() const;
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);
bool checkpoint_exists(const std::string& dir);

}  // namespace fss
