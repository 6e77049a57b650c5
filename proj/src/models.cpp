#include "fss/models.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fss {

namespace {

using json = nlohmann::json;

json layer_to_json(const Layer& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Conv2d:
            j["out_ch"] = l.weight.dim(0);
            j["in_ch"] = l.weight.dim(1);
            j["kernel"] = l.weight.dim(2);
            j["stride"] = l.stride;
            break;
        case LayerKind::Linear:
            j["out_dim"] = l.weight.dim(0);
            j["in_dim"] = l.weight.dim(1);
            break;
        case LayerKind::BatchNorm2d:
            j["channels"] = l.weight.dim(0);
            j["momentum"] = l.bn_momentum;
            j["eps"] = l.bn_eps;
            j["initialized"] = l.bn_initialized;
            break;
        case LayerKind::Dropout:
            j["rate"] = l.dropout_rate;
            break;
        case LayerKind::BilinearUpsample:
            j["out_h"] = l.out_h;
            j["out_w"] = l.out_w;
            break;
        default:
            break;
    }
    return j;
}

Layer layer_from_json(const json& j) {
    LayerKind kind = layer_kind_from_name(j["kind"].get<std::string>());
    Rng dummy(0);
    switch (kind) {
        case LayerKind::Conv2d: {
            Layer l = Layer::conv2d(j["in_ch"], j["out_ch"], j["kernel"], j["stride"], dummy);
            return l;
        }
        case LayerKind::Linear:
            return Layer::linear(j["in_dim"], j["out_dim"], dummy);
        case LayerKind::ReLU:
            return Layer::relu();
        case LayerKind::BatchNorm2d: {
            Layer l = Layer::batch_norm2d(j["channels"]);
            l.bn_momentum = j["momentum"].get<float>();
            l.bn_eps = j["eps"].get<float>();
            l.bn_initialized = j["initialized"].get<bool>();
            return l;
        }
        case LayerKind::Dropout:
            return Layer::dropout(j["rate"].get<float>());
        case LayerKind::BilinearUpsample:
            return Layer::bilinear_upsample(j["out_h"], j["out_w"]);
    }
    throw ConfigError("bad layer json");
}

void save_network(const std::string& dir, const std::string& prefix, const Network& net) {
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        std::string base = dir + "/" + prefix + ".layer" + std::to_string(i);
        if (l.has_params()) {
            save_ftns(base + ".weight.ftns", l.weight);
            save_ftns(base + ".bias.ftns", l.bias);
        }
        if (l.kind == LayerKind::BatchNorm2d) {
            save_ftns(base + ".running_mean.ftns", l.running_mean);
            save_ftns(base + ".running_var.ftns", l.running_var);
        }
    }
}

void load_network(const std::string& dir, const std::string& prefix, Network& net) {
    for (size_t i = 0; i < net.layers.size(); ++i) {
        Layer& l = net.layers[i];
        std::string base = dir + "/" + prefix + ".layer" + std::to_string(i);
        if (l.has_params()) {
            l.weight = load_ftns(base + ".weight.ftns");
            l.bias = load_ftns(base + ".bias.ftns");
            l.grad_weight = Tensor::zeros(l.weight.shape);
            l.grad_bias = Tensor::zeros(l.bias.shape);
        }
        if (l.kind == LayerKind::BatchNorm2d) {
            l.running_mean = load_ftns(base + ".running_mean.ftns");
            l.running_var = load_ftns(base + ".running_var.ftns");
        }
    }
}

uint64_t network_hash(const Network& net, uint64_t h) {
    for (const auto& l : net.layers) {
        if (l.has_params()) {
            h = tensor_hash(l.weight, h);
            h = tensor_hash(l.bias, h);
        }
        if (l.kind == LayerKind::BatchNorm2d) {
            h = tensor_hash(l.running_mean, h);
            h = tensor_hash(l.running_var, h);
        }
    }
    return h;
}

}  // namespace

Encoder Encoder::tiny(Rng& rng) {
    Encoder e;
    e.identity = false;
    e.out_channels = 32;
    e.output_stride = 2;
    e.net.layers.push_back(Layer::conv2d(3, 16, 3, 1, rng));
    e.net.layers.push_back(Layer::batch_norm2d(16));
    e.net.layers.push_back(Layer::relu());
    e.net.layers.push_back(Layer::conv2d(16, 32, 3, 2, rng));
    e.net.layers.push_back(Layer::batch_norm2d(32));
    e.net.layers.push_back(Layer::relu());
    e.net.layers.push_back(Layer::conv2d(32, 32, 3, 1, rng));
    e.net.layers.push_back(Layer::batch_norm2d(32));
    e.net.layers.push_back(Layer::relu());
    return e;
}

Encoder Encoder::make_identity(int channels) {
    Encoder e;
    e.identity = true;
    e.out_channels = channels;
    e.output_stride = 1;
    return e;
}

Decoder Decoder::make(int channels, int num_labels, int image_h, int image_w, Rng& rng) {
    Decoder d;
    d.num_labels = num_labels;
    d.net.layers.push_back(Layer::conv2d(channels, channels, 3, 1, rng));
    d.net.layers.push_back(Layer::batch_norm2d(channels));
    d.net.layers.push_back(Layer::relu());
    d.net.layers.push_back(Layer::conv2d(channels, channels, 3, 1, rng));
    d.net.layers.push_back(Layer::batch_norm2d(channels));
    d.net.layers.push_back(Layer::relu());
    d.net.layers.push_back(Layer::conv2d(channels, num_labels, 1, 1, rng));
    d.net.layers.push_back(Layer::bilinear_upsample(image_h, image_w));
    return d;
}

uint64_t Checkpoint::param_hash() const {
    uint64_t h = fnv1a64(kind);
    h = network_hash(encoder.net, h);
    for (const auto& d : decoders) h = network_hash(d.net, h);
    return h;
}

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["kind"] = ckpt.kind;
    manifest["iteration"] = ckpt.iteration;
    manifest["seed"] = ckpt.seed;
    manifest["config_hash"] = ckpt.config_hash;
    manifest["param_hash"] = hex64(ckpt.param_hash());
    json enc;
    enc["identity"] = ckpt.encoder.identity;
    enc["out_channels"] = ckpt.encoder.out_channels;
    enc["output_stride"] = ckpt.encoder.output_stride;
    json enc_layers = json::array();
    for (const auto& l : ckpt.encoder.net.layers) enc_layers.push_back(layer_to_json(l));
    enc["layers"] = enc_layers;
    manifest["encoder"] = enc;
    json decs = json::array();
    for (const auto& d : ckpt.decoders) {
        json dj;
        dj["num_labels"] = d.num_labels;
        json dl = json::array();
        for (const auto& l : d.net.layers) dl.push_back(layer_to_json(l));
        dj["layers"] = dl;
        decs.push_back(dj);
    }
    manifest["decoders"] = decs;
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw IoError("cannot write checkpoint manifest in " + dir);
    os << manifest.dump(2) << "\n";

    if (!ckpt.encoder.identity) save_network(dir, "encoder", ckpt.encoder.net);
    for (size_t i = 0; i < ckpt.decoders.size(); ++i)
        save_network(dir, "decoder" + std::to_string(i), ckpt.decoders[i].net);
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw IoError("cannot read checkpoint manifest in " + dir);
    json manifest = json::parse(is);
    Checkpoint ckpt;
    ckpt.kind = manifest["kind"].get<std::string>();
    ckpt.iteration = manifest["iteration"].get<long>();
    ckpt.seed = manifest["seed"].get<uint64_t>();
    ckpt.config_hash = manifest["config_hash"].get<std::string>();

    const json& enc = manifest["encoder"];
    ckpt.encoder.identity = enc["identity"].get<bool>();
    ckpt.encoder.out_channels = enc["out_channels"].get<int>();
    ckpt.encoder.output_stride = enc["output_stride"].get<int>();
    for (const auto& lj : enc["layers"]) ckpt.encoder.net.layers.push_back(layer_from_json(lj));
    if (!ckpt.encoder.identity) load_network(dir, "encoder", ckpt.encoder.net);

    for (const auto& dj : manifest["decoders"]) {
        Decoder d;
        d.num_labels = dj["num_labels"].get<int>();
        for (const auto& lj : dj["layers"]) d.net.layers.push_back(layer_from_json(lj));
        load_network(dir, "decoder" + std::to_string(ckpt.decoders.size()), d.net);
        ckpt.decoders.push_back(std::move(d));
    }
    return ckpt;
}

bool checkpoint_exists(const std::string& dir) {
    return std::filesystem::exists(dir + "/manifest.json");
}

}  // namespace fss
