#include "fss/layers.hpp"

#include <cmath>
#include <cstring>

namespace fss {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Linear: return "linear";
        case LayerKind::ReLU: return "relu";
        case LayerKind::BatchNorm2d: return "batch_norm2d";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::BilinearUpsample: return "bilinear_upsample";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv2d") return LayerKind::Conv2d;
    if (name == "linear") return LayerKind::Linear;
    if (name == "relu") return LayerKind::ReLU;
    if (name == "batch_norm2d") return LayerKind::BatchNorm2d;
    if (name == "dropout") return LayerKind::Dropout;
    if (name == "bilinear_upsample") return LayerKind::BilinearUpsample;
    throw ConfigError("unknown layer kind: " + name);
}

Layer Layer::conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng) {
    Layer l;
    l.kind = LayerKind::Conv2d;
    l.stride = stride;
    l.pad = kernel / 2;  // preserves spatial size at stride 1
    l.weight = Tensor::zeros({out_ch, in_ch, kernel, kernel});
    l.bias = Tensor::zeros({out_ch});
    float std = std::sqrt(2.0f / (static_cast<float>(in_ch) * kernel * kernel));
    for (auto& v : l.weight.data) v = static_cast<float>(rng.normal()) * std;
    l.grad_weight = Tensor::zeros(l.weight.shape);
    l.grad_bias = Tensor::zeros(l.bias.shape);
    return l;
}

Layer Layer::linear(int in_dim, int out_dim, Rng& rng) {
    Layer l;
    l.kind = LayerKind::Linear;
    l.weight = Tensor::zeros({out_dim, in_dim});
    l.bias = Tensor::zeros({out_dim});
    float std = std::sqrt(2.0f / static_cast<float>(in_dim));
    for (auto& v : l.weight.data) v = static_cast<float>(rng.normal()) * std;
    l.grad_weight = Tensor::zeros(l.weight.shape);
    l.grad_bias = Tensor::zeros(l.bias.shape);
    return l;
}

Layer Layer::relu() {
    Layer l;
    l.kind = LayerKind::ReLU;
    return l;
}

Layer Layer::batch_norm2d(int channels) {
    Layer l;
    l.kind = LayerKind::BatchNorm2d;
    l.weight = Tensor::full({channels}, 1.0f);  // gamma
    l.bias = Tensor::zeros({channels});         // beta
    l.grad_weight = Tensor::zeros({channels});
    l.grad_bias = Tensor::zeros({channels});
    l.running_mean = Tensor::zeros({channels});
    l.running_var = Tensor::full({channels}, 1.0f);
    return l;
}

Layer Layer::dropout(float rate) {
    if (rate < 0.0f || rate >= 1.0f) throw ConfigError("dropout rate must be in [0,1)");
    Layer l;
    l.kind = LayerKind::Dropout;
    l.dropout_rate = rate;
    return l;
}

Layer Layer::bilinear_upsample(int out_h, int out_w) {
    Layer l;
    l.kind = LayerKind::BilinearUpsample;
    l.out_h = out_h;
    l.out_w = out_w;
    return l;
}

namespace {

// 3x3 stride-1 pad-1 stencil path: three taps per row pass keep the
// load/store-to-FMA ratio low. Covers every conv in the default models
// except the stride-2 encoder stage.
void conv3x3_s1_fwd(const Layer& l, const Tensor& x, Tensor& out) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = l.weight.dim(0);
    for (int co = 0; co < Cout; ++co) {
        float* op = &out.at(co, 0, 0);
        float b = l.bias.at(co);
        for (int i = 0; i < H * W; ++i) op[i] = b;
        for (int ci = 0; ci < Cin; ++ci) {
            const float* ip = &x.at(ci, 0, 0);
            for (int ky = 0; ky < 3; ++ky) {
                float w0 = l.weight.at(co, ci, ky, 0);
                float w1 = l.weight.at(co, ci, ky, 1);
                float w2 = l.weight.at(co, ci, ky, 2);
                for (int y = 0; y < H; ++y) {
                    int iy = y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    float* orow = op + static_cast<size_t>(y) * W;
                    const float* irow = ip + static_cast<size_t>(iy) * W;
                    orow[0] += w1 * irow[0] + w2 * irow[1];
                    for (int x2 = 1; x2 < W - 1; ++x2)
                        orow[x2] += w0 * irow[x2 - 1] + w1 * irow[x2] + w2 * irow[x2 + 1];
                    orow[W - 1] += w0 * irow[W - 2] + w1 * irow[W - 1];
                }
            }
        }
    }
}

void conv3x3_s1_bwd(const Layer& l, const Tensor& x, const Tensor& gout, Tensor& gin, Tensor* gw,
                    Tensor* gb) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = l.weight.dim(0);
    for (int co = 0; co < Cout; ++co) {
        const float* gp = &gout.at(co, 0, 0);
        if (gb) {
            double acc = 0.0;
            for (int i = 0; i < H * W; ++i) acc += gp[i];
            gb->at(co) += static_cast<float>(acc);
        }
        for (int ci = 0; ci < Cin; ++ci) {
            float* gip = &gin.at(ci, 0, 0);
            for (int ky = 0; ky < 3; ++ky) {
                float w0 = l.weight.at(co, ci, ky, 0);
                float w1 = l.weight.at(co, ci, ky, 1);
                float w2 = l.weight.at(co, ci, ky, 2);
                for (int iy = 0; iy < H; ++iy) {
                    int y = iy - ky + 1;
                    if (y < 0 || y >= H) continue;
                    float* girow = gip + static_cast<size_t>(iy) * W;
                    const float* grow = gp + static_cast<size_t>(y) * W;
                    girow[0] += w1 * grow[0] + w0 * grow[1];
                    for (int ix = 1; ix < W - 1; ++ix)
                        girow[ix] += w2 * grow[ix - 1] + w1 * grow[ix] + w0 * grow[ix + 1];
                    girow[W - 1] += w2 * grow[W - 2] + w1 * grow[W - 1];
                }
            }
            if (!gw) continue;
            const float* ip = &x.at(ci, 0, 0);
            for (int ky = 0; ky < 3; ++ky) {
                float l0[8] = {0}, l1[8] = {0}, l2[8] = {0};
                double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                for (int y = 0; y < H; ++y) {
                    int iy = y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    const float* grow = gp + static_cast<size_t>(y) * W;
                    const float* irow = ip + static_cast<size_t>(iy) * W;
                    a1 += static_cast<double>(grow[0]) * irow[0];
                    a2 += static_cast<double>(grow[0]) * irow[1];
                    int n = W - 2;
                    int x2 = 0;
                    for (; x2 + 8 <= n; x2 += 8)
                        for (int j = 0; j < 8; ++j) {
                            float g = grow[1 + x2 + j];
                            l0[j] += g * irow[x2 + j];
                            l1[j] += g * irow[1 + x2 + j];
                            l2[j] += g * irow[2 + x2 + j];
                        }
                    for (; x2 < n; ++x2) {
                        float g = grow[1 + x2];
                        a0 += static_cast<double>(g) * irow[x2];
                        a1 += static_cast<double>(g) * irow[1 + x2];
                        a2 += static_cast<double>(g) * irow[2 + x2];
                    }
                    a0 += static_cast<double>(grow[W - 1]) * irow[W - 2];
                    a1 += static_cast<double>(grow[W - 1]) * irow[W - 1];
                }
                for (int j = 0; j < 8; ++j) {
                    a0 += l0[j];
                    a1 += l1[j];
                    a2 += l2[j];
                }
                gw->at(co, ci, ky, 0) += static_cast<float>(a0);
                gw->at(co, ci, ky, 1) += static_cast<float>(a1);
                gw->at(co, ci, ky, 2) += static_cast<float>(a2);
            }
        }
    }
}

// 3x3 stride-2 pad-1 path for even widths. Input columns are split into
// even/odd phase buffers so every tap reads a contiguous stream.
struct PhaseView {
    int H, Wh;                  // Wh = W/2
    std::vector<float> even, odd;
    void build(const float* plane, int height, int width) {
        H = height;
        Wh = width / 2;
        even.resize(static_cast<size_t>(H) * Wh);
        odd.resize(static_cast<size_t>(H) * Wh);
        for (int y = 0; y < H; ++y) {
            const float* row = plane + static_cast<size_t>(y) * width;
            float* e = even.data() + static_cast<size_t>(y) * Wh;
            float* o = odd.data() + static_cast<size_t>(y) * Wh;
            for (int j = 0; j < Wh; ++j) {
                e[j] = row[2 * j];
                o[j] = row[2 * j + 1];
            }
        }
    }
};

void conv3x3_s2_fwd(const Layer& l, const Tensor& x, Tensor& out) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = l.weight.dim(0);
    int Ho = out.dim(1), Wo = out.dim(2);
    std::vector<PhaseView> phases(static_cast<size_t>(Cin));
    for (int ci = 0; ci < Cin; ++ci) phases[static_cast<size_t>(ci)].build(&x.at(ci, 0, 0), H, W);
    for (int co = 0; co < Cout; ++co) {
        float* op = &out.at(co, 0, 0);
        float b = l.bias.at(co);
        for (int i = 0; i < Ho * Wo; ++i) op[i] = b;
        for (int ci = 0; ci < Cin; ++ci) {
            const PhaseView& ph = phases[static_cast<size_t>(ci)];
            for (int ky = 0; ky < 3; ++ky) {
                float w0 = l.weight.at(co, ci, ky, 0);
                float w1 = l.weight.at(co, ci, ky, 1);
                float w2 = l.weight.at(co, ci, ky, 2);
                for (int y = 0; y < Ho; ++y) {
                    int iy = 2 * y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    float* orow = op + static_cast<size_t>(y) * Wo;
                    const float* e = ph.even.data() + static_cast<size_t>(iy) * ph.Wh;
                    const float* o = ph.odd.data() + static_cast<size_t>(iy) * ph.Wh;
                    orow[0] += w1 * e[0] + w2 * o[0];
                    for (int x2 = 1; x2 < Wo; ++x2)
                        orow[x2] += w0 * o[x2 - 1] + w1 * e[x2] + w2 * o[x2];
                }
            }
        }
    }
}

void conv3x3_s2_bwd(const Layer& l, const Tensor& x, const Tensor& gout, Tensor& gin, Tensor* gw,
                    Tensor* gb) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = l.weight.dim(0);
    int Ho = gout.dim(1), Wo = gout.dim(2);
    int Wh = W / 2;
    std::vector<PhaseView> phases(static_cast<size_t>(Cin));
    if (gw)
        for (int ci = 0; ci < Cin; ++ci)
            phases[static_cast<size_t>(ci)].build(&x.at(ci, 0, 0), H, W);
    std::vector<float> ge(static_cast<size_t>(H) * Wh), go(static_cast<size_t>(H) * Wh);
    for (int ci = 0; ci < Cin; ++ci) {
        std::fill(ge.begin(), ge.end(), 0.0f);
        std::fill(go.begin(), go.end(), 0.0f);
        for (int co = 0; co < Cout; ++co) {
            const float* gp = &gout.at(co, 0, 0);
            if (gb && ci == 0) {
                double acc = 0.0;
                for (int i = 0; i < Ho * Wo; ++i) acc += gp[i];
                gb->at(co) += static_cast<float>(acc);
            }
            for (int ky = 0; ky < 3; ++ky) {
                float w0 = l.weight.at(co, ci, ky, 0);
                float w1 = l.weight.at(co, ci, ky, 1);
                float w2 = l.weight.at(co, ci, ky, 2);
                for (int y = 0; y < Ho; ++y) {
                    int iy = 2 * y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    const float* grow = gp + static_cast<size_t>(y) * Wo;
                    float* erow = ge.data() + static_cast<size_t>(iy) * Wh;
                    float* orow = go.data() + static_cast<size_t>(iy) * Wh;
                    erow[0] += w1 * grow[0];
                    orow[0] += w2 * grow[0];
                    for (int x2 = 1; x2 < Wo; ++x2) {
                        erow[x2] += w1 * grow[x2];
                        orow[x2] += w2 * grow[x2];
                        orow[x2 - 1] += w0 * grow[x2];
                    }
                }
                if (!gw) continue;
                const PhaseView& ph = phases[static_cast<size_t>(ci)];
                float l0[8] = {0}, l1[8] = {0}, l2[8] = {0};
                double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                for (int y = 0; y < Ho; ++y) {
                    int iy = 2 * y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    const float* grow = gp + static_cast<size_t>(y) * Wo;
                    const float* e = ph.even.data() + static_cast<size_t>(iy) * ph.Wh;
                    const float* o = ph.odd.data() + static_cast<size_t>(iy) * ph.Wh;
                    a1 += static_cast<double>(grow[0]) * e[0];
                    a2 += static_cast<double>(grow[0]) * o[0];
                    int n = Wo - 1;
                    int x2 = 0;
                    for (; x2 + 8 <= n; x2 += 8)
                        for (int j = 0; j < 8; ++j) {
                            float g = grow[1 + x2 + j];
                            l0[j] += g * o[x2 + j];
                            l1[j] += g * e[1 + x2 + j];
                            l2[j] += g * o[1 + x2 + j];
                        }
                    for (; x2 < n; ++x2) {
                        float g = grow[1 + x2];
                        a0 += static_cast<double>(g) * o[x2];
                        a1 += static_cast<double>(g) * e[1 + x2];
                        a2 += static_cast<double>(g) * o[1 + x2];
                    }
                }
                for (int j = 0; j < 8; ++j) {
                    a0 += l0[j];
                    a1 += l1[j];
                    a2 += l2[j];
                }
                gw->at(co, ci, ky, 0) += static_cast<float>(a0);
                gw->at(co, ci, ky, 1) += static_cast<float>(a1);
                gw->at(co, ci, ky, 2) += static_cast<float>(a2);
            }
        }
        float* gip = &gin.at(ci, 0, 0);
        for (int y = 0; y < H; ++y) {
            const float* e = ge.data() + static_cast<size_t>(y) * Wh;
            const float* o = go.data() + static_cast<size_t>(y) * Wh;
            float* row = gip + static_cast<size_t>(y) * W;
            for (int j = 0; j < Wh; ++j) {
                row[2 * j] = e[j];
                row[2 * j + 1] = o[j];
            }
        }
    }
}

Tensor conv2d_fwd(const Layer& l, const Tensor& x) {
    if (x.ndim() != 3 || x.dim(0) != l.weight.dim(1))
        throw DimensionError("conv2d: input channels do not match weights");
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = l.weight.dim(0), K = l.weight.dim(2);
    int s = l.stride, p = l.pad;
    int Ho = (H + 2 * p - K) / s + 1;
    int Wo = (W + 2 * p - K) / s + 1;
    if (Ho <= 0 || Wo <= 0) throw DimensionError("conv2d: input too small");
    Tensor out({Cout, Ho, Wo});
    if (K == 3 && s == 1 && p == 1 && W >= 2) {
        conv3x3_s1_fwd(l, x, out);
        return out;
    }
    for (int co = 0; co < Cout; ++co) {
        float* op = &out.at(co, 0, 0);
        float b = l.bias.at(co);
        for (int i = 0; i < Ho * Wo; ++i) op[i] = b;
        for (int ci = 0; ci < Cin; ++ci) {
            const float* ip = &x.at(ci, 0, 0);
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    float w = l.weight.at(co, ci, ky, kx);
                    for (int y = 0; y < Ho; ++y) {
                        int iy = y * s + ky - p;
                        if (iy < 0 || iy >= H) continue;
                        int x0 = 0, x1 = Wo;
                        while (x0 < Wo && x0 * s + kx - p < 0) ++x0;
                        while (x1 > x0 && (x1 - 1) * s + kx - p >= W) --x1;
                        float* orow = op + static_cast<size_t>(y) * Wo;
                        const float* irow = ip + static_cast<size_t>(iy) * W + (x0 * s + kx - p);
                        if (s == 1) {
                            for (int xx = x0; xx < x1; ++xx)
                                orow[xx] += w * irow[xx - x0];
                        } else {
                            for (int xx = x0; xx < x1; ++xx)
                                orow[xx] += w * irow[static_cast<size_t>(xx - x0) * s];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_bwd(const Layer& l, const Tensor& x, const Tensor& gout, Tensor* gw, Tensor* gb) {
    int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Cout = l.weight.dim(0), K = l.weight.dim(2);
    int s = l.stride, p = l.pad;
    int Ho = gout.dim(1), Wo = gout.dim(2);
    Tensor gin({Cin, H, W});
    if (K == 3 && s == 1 && p == 1 && W >= 2) {
        conv3x3_s1_bwd(l, x, gout, gin, gw, gb);
        return gin;
    }
    // split passes: the FMA scatter and the dot-product reduction each
    // vectorize on their own but not fused
    for (int co = 0; co < Cout; ++co) {
        const float* gp = &gout.at(co, 0, 0);
        if (gb) {
            double acc = 0.0;
            for (int i = 0; i < Ho * Wo; ++i) acc += gp[i];
            gb->at(co) += static_cast<float>(acc);
        }
        for (int ci = 0; ci < Cin; ++ci) {
            float* gip = &gin.at(ci, 0, 0);
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    float w = l.weight.at(co, ci, ky, kx);
                    for (int y = 0; y < Ho; ++y) {
                        int iy = y * s + ky - p;
                        if (iy < 0 || iy >= H) continue;
                        int x0 = 0, x1 = Wo;
                        while (x0 < Wo && x0 * s + kx - p < 0) ++x0;
                        while (x1 > x0 && (x1 - 1) * s + kx - p >= W) --x1;
                        const float* grow = gp + static_cast<size_t>(y) * Wo;
                        float* girow = gip + static_cast<size_t>(iy) * W + (x0 * s + kx - p);
                        if (s == 1) {
                            for (int xx = x0; xx < x1; ++xx) girow[xx - x0] += w * grow[xx];
                        } else {
                            for (int xx = x0; xx < x1; ++xx)
                                girow[static_cast<size_t>(xx - x0) * s] += w * grow[xx];
                        }
                    }
                }
            }
        }
        if (!gw) continue;
        for (int ci = 0; ci < Cin; ++ci) {
            const float* ip = &x.at(ci, 0, 0);
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                    double wacc = 0.0;
                    for (int y = 0; y < Ho; ++y) {
                        int iy = y * s + ky - p;
                        if (iy < 0 || iy >= H) continue;
                        int x0 = 0, x1 = Wo;
                        while (x0 < Wo && x0 * s + kx - p < 0) ++x0;
                        while (x1 > x0 && (x1 - 1) * s + kx - p >= W) --x1;
                        const float* grow = gp + static_cast<size_t>(y) * Wo;
                        const float* irow = ip + static_cast<size_t>(iy) * W + (x0 * s + kx - p);
                        if (s == 1) {
                            int n = x1 - x0;
                            const float* ga = grow + x0;
                            int xx = 0;
                            for (; xx + 8 <= n; xx += 8)
                                for (int j = 0; j < 8; ++j) lanes[j] += ga[xx + j] * irow[xx + j];
                            for (; xx < n; ++xx) wacc += static_cast<double>(ga[xx]) * irow[xx];
                        } else {
                            for (int xx = x0; xx < x1; ++xx)
                                wacc += static_cast<double>(grow[xx]) * irow[(xx - x0) * s];
                        }
                    }
                    for (int j = 0; j < 8; ++j) wacc += lanes[j];
                    gw->at(co, ci, ky, kx) += static_cast<float>(wacc);
                }
            }
        }
    }
    return gin;
}

Tensor linear_fwd(const Layer& l, const Tensor& x) {
    if (x.ndim() != 2 || x.dim(1) != l.weight.dim(1))
        throw DimensionError("linear: input width does not match weights");
    int N = x.dim(0), Cin = x.dim(1), Cout = l.weight.dim(0);
    Tensor out({N, Cout});
    for (int n = 0; n < N; ++n) {
        const float* xi = &x.at(n, 0);
        for (int o = 0; o < Cout; ++o) {
            const float* wr = &l.weight.at(o, 0);
            float acc = l.bias.at(o);
            for (int i = 0; i < Cin; ++i) acc += wr[i] * xi[i];
            out.at(n, o) = acc;
        }
    }
    return out;
}

Tensor linear_bwd(const Layer& l, const Tensor& x, const Tensor& gout, Tensor* gw, Tensor* gb) {
    int N = x.dim(0), Cin = x.dim(1), Cout = l.weight.dim(0);
    Tensor gin({N, Cin});
    for (int n = 0; n < N; ++n) {
        const float* xi = &x.at(n, 0);
        float* gi = &gin.at(n, 0);
        for (int o = 0; o < Cout; ++o) {
            float g = gout.at(n, o);
            if (gb) gb->at(o) += g;
            const float* wr = &l.weight.at(o, 0);
            if (gw) {
                float* gwr = &gw->at(o, 0);
                for (int i = 0; i < Cin; ++i) {
                    gwr[i] += g * xi[i];
                    gi[i] += g * wr[i];
                }
            } else {
                for (int i = 0; i < Cin; ++i) gi[i] += g * wr[i];
            }
        }
    }
    return gin;
}

Tensor bn_fwd(const Layer& l, const Tensor& x, LayerCtx& ctx, Mode mode) {
    if (x.ndim() != 3 || x.dim(0) != l.weight.dim(0))
        throw DimensionError("batch_norm2d: channel mismatch");
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int64_t n = static_cast<int64_t>(H) * W;
    Tensor out(x.shape);
    ctx.bn_mean.assign(static_cast<size_t>(C), 0.0f);
    ctx.bn_var.assign(static_cast<size_t>(C), 0.0f);
    for (int c = 0; c < C; ++c) {
        const float* xp = &x.at(c, 0, 0);
        float* op = &out.at(c, 0, 0);
        float mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0, sq = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                sum += xp[i];
                sq += static_cast<double>(xp[i]) * xp[i];
            }
            double m = sum / static_cast<double>(n);
            mean = static_cast<float>(m);
            var = static_cast<float>(std::max(0.0, sq / static_cast<double>(n) - m * m));
            ctx.bn_mean[static_cast<size_t>(c)] = mean;
            ctx.bn_var[static_cast<size_t>(c)] = var;
        } else {
            if (!l.bn_initialized)
                throw UninitializedStatisticsError(
                    "batch_norm2d: eval mode before any training step");
            mean = l.running_mean.at(c);
            var = l.running_var.at(c);
        }
        float inv = 1.0f / std::sqrt(var + l.bn_eps);
        float g = l.weight.at(c), b = l.bias.at(c);
        for (int64_t i = 0; i < n; ++i) op[i] = g * (xp[i] - mean) * inv + b;
    }
    return out;
}

Tensor bn_bwd(const Layer& l, const Tensor& gout, const LayerCtx& ctx, Tensor* gw, Tensor* gb) {
    const Tensor& x = ctx.input;
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int64_t n = static_cast<int64_t>(H) * W;
    Tensor gin(x.shape);
    for (int c = 0; c < C; ++c) {
        const float* xp = &x.at(c, 0, 0);
        const float* gp = &gout.at(c, 0, 0);
        float* gip = &gin.at(c, 0, 0);
        float gamma = l.weight.at(c);
        if (ctx.mode == Mode::Train) {
            float mean = ctx.bn_mean[static_cast<size_t>(c)];
            float var = ctx.bn_var[static_cast<size_t>(c)];
            double inv = 1.0 / std::sqrt(static_cast<double>(var) + l.bn_eps);
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                double xh = (xp[i] - mean) * inv;
                sum_g += gp[i];
                sum_gx += gp[i] * xh;
            }
            if (gw) gw->at(c) += static_cast<float>(sum_gx);
            if (gb) gb->at(c) += static_cast<float>(sum_g);
            double k1 = sum_g / static_cast<double>(n);
            double k2 = sum_gx / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i) {
                double xh = (xp[i] - mean) * inv;
                gip[i] = static_cast<float>(gamma * inv * (gp[i] - k1 - xh * k2));
            }
        } else {
            double inv = 1.0 / std::sqrt(static_cast<double>(l.running_var.at(c)) + l.bn_eps);
            float mean = l.running_mean.at(c);
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                sum_g += gp[i];
                sum_gx += gp[i] * (xp[i] - mean) * inv;
                gip[i] = static_cast<float>(gamma * inv * gp[i]);
            }
            if (gw) gw->at(c) += static_cast<float>(sum_gx);
            if (gb) gb->at(c) += static_cast<float>(sum_g);
        }
    }
    return gin;
}

Tensor upsample_fwd(const Layer& l, const Tensor& x) {
    if (x.ndim() != 3) throw DimensionError("bilinear_upsample: input must be (C,h,w)");
    int C = x.dim(0), h = x.dim(1), w = x.dim(2);
    int H = l.out_h, W = l.out_w;
    if (H <= 0 || W <= 0) throw ConfigError("bilinear_upsample: target size not set");
    Tensor out({C, H, W});
    float sy = (H > 1 && h > 1) ? static_cast<float>(h - 1) / (H - 1) : 0.0f;
    float sx = (W > 1 && w > 1) ? static_cast<float>(w - 1) / (W - 1) : 0.0f;
    for (int y = 0; y < H; ++y) {
        float fy = y * sy;
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, h - 1);
        float ay = fy - y0;
        for (int x2 = 0; x2 < W; ++x2) {
            float fx = x2 * sx;
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, w - 1);
            float ax = fx - x0;
            for (int c = 0; c < C; ++c) {
                float v = (1 - ay) * ((1 - ax) * x.at(c, y0, x0) + ax * x.at(c, y0, x1)) +
                          ay * ((1 - ax) * x.at(c, y1, x0) + ax * x.at(c, y1, x1));
                out.at(c, y, x2) = v;
            }
        }
    }
    return out;
}

Tensor upsample_bwd(const Layer& l, const Tensor& gout, const Tensor& x) {
    int C = x.dim(0), h = x.dim(1), w = x.dim(2);
    int H = l.out_h, W = l.out_w;
    Tensor gin({C, h, w});
    float sy = (H > 1 && h > 1) ? static_cast<float>(h - 1) / (H - 1) : 0.0f;
    float sx = (W > 1 && w > 1) ? static_cast<float>(w - 1) / (W - 1) : 0.0f;
    for (int y = 0; y < H; ++y) {
        float fy = y * sy;
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, h - 1);
        float ay = fy - y0;
        for (int x2 = 0; x2 < W; ++x2) {
            float fx = x2 * sx;
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, w - 1);
            float ax = fx - x0;
            for (int c = 0; c < C; ++c) {
                float g = gout.at(c, y, x2);
                gin.at(c, y0, x0) += (1 - ay) * (1 - ax) * g;
                gin.at(c, y0, x1) += (1 - ay) * ax * g;
                gin.at(c, y1, x0) += ay * (1 - ax) * g;
                gin.at(c, y1, x1) += ay * ax * g;
            }
        }
    }
    return gin;
}

}  // namespace

Tensor Layer::forward(const Tensor& x, LayerCtx& ctx, Mode mode, Rng* rng) const {
    ctx.mode = mode;
    switch (kind) {
        case LayerKind::Conv2d:
            ctx.input = x;
            return conv2d_fwd(*this, x);
        case LayerKind::Linear:
            ctx.input = x;
            return linear_fwd(*this, x);
        case LayerKind::ReLU: {
            ctx.input = x;
            Tensor out = x;
            for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
            return out;
        }
        case LayerKind::BatchNorm2d:
            ctx.input = x;
            return bn_fwd(*this, x, ctx, mode);
        case LayerKind::Dropout: {
            ctx.input = x;
            if (mode == Mode::Eval || dropout_rate == 0.0f) {
                ctx.dropout_mask.clear();
                return x;
            }
            size_t n = x.data.size();
            if (!(ctx.reuse_dropout && ctx.dropout_mask.size() == n)) {
                if (!rng) throw ConfigError("dropout: train mode requires an rng");
                ctx.dropout_mask.assign(n, 1);
                for (size_t i = 0; i < n; ++i)
                    ctx.dropout_mask[i] = rng->uniform() < dropout_rate ? 0 : 1;
            }
            Tensor out = x;
            float scale = 1.0f / (1.0f - dropout_rate);
            for (size_t i = 0; i < n; ++i)
                out.data[i] = ctx.dropout_mask[i] ? out.data[i] * scale : 0.0f;
            return out;
        }
        case LayerKind::BilinearUpsample:
            ctx.input = x;
            return upsample_fwd(*this, x);
    }
    throw ConfigError("unknown layer kind");
}

Tensor Layer::backward(const Tensor& grad_out, const LayerCtx& ctx, Tensor* gw, Tensor* gb) const {
    switch (kind) {
        case LayerKind::Conv2d:
            return conv2d_bwd(*this, ctx.input, grad_out, gw, gb);
        case LayerKind::Linear:
            return linear_bwd(*this, ctx.input, grad_out, gw, gb);
        case LayerKind::ReLU: {
            Tensor gin = grad_out;
            for (size_t i = 0; i < gin.data.size(); ++i)
                if (ctx.input.data[i] <= 0.0f) gin.data[i] = 0.0f;
            return gin;
        }
        case LayerKind::BatchNorm2d:
            return bn_bwd(*this, grad_out, ctx, gw, gb);
        case LayerKind::Dropout: {
            if (ctx.mode == Mode::Eval || dropout_rate == 0.0f) return grad_out;
            Tensor gin = grad_out;
            float scale = 1.0f / (1.0f - dropout_rate);
            for (size_t i = 0; i < gin.data.size(); ++i)
                gin.data[i] = ctx.dropout_mask[i] ? gin.data[i] * scale : 0.0f;
            return gin;
        }
        case LayerKind::BilinearUpsample:
            return upsample_bwd(*this, grad_out, ctx.input);
    }
    throw ConfigError("unknown layer kind");
}

void Layer::apply_bn_update(const LayerCtx& ctx) {
    if (kind != LayerKind::BatchNorm2d || ctx.mode != Mode::Train) return;
    int C = weight.dim(0);
    for (int c = 0; c < C; ++c) {
        running_mean.at(c) = (1.0f - bn_momentum) * running_mean.at(c) +
                             bn_momentum * ctx.bn_mean[static_cast<size_t>(c)];
        running_var.at(c) = (1.0f - bn_momentum) * running_var.at(c) +
                            bn_momentum * ctx.bn_var[static_cast<size_t>(c)];
    }
    bn_initialized = true;
}

Tensor Network::forward(const Tensor& x, Ctx& ctx, Mode mode, Rng* rng) const {
    ctx.resize(layers.size());
    Tensor cur = x;
    for (size_t i = 0; i < layers.size(); ++i)
        cur = layers[i].forward(cur, ctx[i], mode, rng);
    return cur;
}

Tensor Network::backward(const Tensor& grad_out, const Ctx& ctx, GradBuffer* gb) const {
    Tensor cur = grad_out;
    for (size_t i = layers.size(); i-- > 0;) {
        Tensor* gw = nullptr;
        Tensor* gbias = nullptr;
        if (gb && layers[i].has_params()) {
            gw = &(*gb)[2 * i];
            gbias = &(*gb)[2 * i + 1];
        }
        cur = layers[i].backward(cur, ctx[i], gw, gbias);
    }
    return cur;
}

Network::GradBuffer Network::make_grad_buffer() const {
    GradBuffer gb(2 * layers.size());
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].has_params()) {
            gb[2 * i] = Tensor::zeros(layers[i].weight.shape);
            gb[2 * i + 1] = Tensor::zeros(layers[i].bias.shape);
        }
    }
    return gb;
}

void Network::accumulate(const GradBuffer& gb) {
    for (size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) continue;
        layers[i].grad_weight.add_scaled(gb[2 * i], 1.0f);
        layers[i].grad_bias.add_scaled(gb[2 * i + 1], 1.0f);
    }
}

void Network::add_buffers(GradBuffer& dst, const GradBuffer& src) const {
    for (size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) continue;
        dst[2 * i].add_scaled(src[2 * i], 1.0f);
        dst[2 * i + 1].add_scaled(src[2 * i + 1], 1.0f);
    }
}

void Network::zero_grads() {
    for (auto& l : layers) {
        if (!l.has_params()) continue;
        l.grad_weight.fill(0.0f);
        l.grad_bias.fill(0.0f);
    }
}

void Network::update_bn_stats(const Ctx& ctx) {
    for (size_t i = 0; i < layers.size(); ++i) layers[i].apply_bn_update(ctx[i]);
}

std::vector<ParamRef> Network::params(const std::string& prefix) {
    std::vector<ParamRef> out;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) continue;
        std::string base = prefix + "layer" + std::to_string(i) + "." +
                           layer_kind_name(layers[i].kind);
        out.push_back({&layers[i].weight, &layers[i].grad_weight, base + ".weight"});
        out.push_back({&layers[i].bias, &layers[i].grad_bias, base + ".bias"});
    }
    return out;
}

}  // namespace fss
