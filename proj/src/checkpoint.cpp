#include "gembed/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace gembed {

namespace {

constexpr char kMagic[8] = {'G', 'E', 'M', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError(path + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double get_f64(std::istream& in, const std::string& path) {
    const std::uint64_t bits = get_u64(in, path);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u64(out, model.cfg.d);
    put_u64(out, model.cfg.L);
    put_u64(out, model.cfg.M);
    put_u64(out, model.cfg.d_ff);
    out.put(model.cfg.include_self ? 1 : 0);
    out.put(model.cfg.scale_by_head_dim ? 1 : 0);
    put_u64(out, model.input_dim);
    put_u64(out, model.n_classes);
    put_u64(out, model.seed);
    const auto params = all_param_list(model);
    put_u64(out, params.size());
    for (const auto& [name, tensor] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor->shape.size()));
        for (std::size_t dim : tensor->shape) put_u64(out, dim);
        for (double v : tensor->data) put_f64(out, v);
    }
    if (!out) throw DataError("write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError(path + ": not a model checkpoint (bad magic)");
    }
    const std::uint32_t version = get_u32(in, path);
    if (version != kVersion) {
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    Model model;
    model.cfg.d = get_u64(in, path);
    model.cfg.L = get_u64(in, path);
    model.cfg.M = get_u64(in, path);
    model.cfg.d_ff = get_u64(in, path);
    model.cfg.include_self = in.get() == 1;
    model.cfg.scale_by_head_dim = in.get() == 1;
    model.input_dim = get_u64(in, path);
    model.n_classes = get_u64(in, path);
    model.seed = get_u64(in, path);
    model.cfg.validate();

    std::map<std::string, TensorPtr> stored;
    const std::uint64_t count = get_u64(in, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw DataError(path + ": truncated checkpoint");
        const std::uint32_t rank = get_u32(in, path);
        std::vector<std::size_t> shape;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape.push_back(static_cast<std::size_t>(get_u64(in, path)));
        }
        std::vector<double> data(shape_numel(shape));
        for (double& v : data) v = get_f64(in, path);
        if (!stored.emplace(name, Tensor::make(shape, std::move(data), true)).second) {
            throw DataError(path + ": duplicate tensor " + name);
        }
    }

    auto take = [&](const std::string& name, std::vector<std::size_t> shape) {
        auto it = stored.find(name);
        if (it == stored.end()) throw DataError(path + ": missing tensor " + name);
        if (it->second->shape != shape) {
            throw DataError(path + ": tensor " + name + " has shape " +
                            shape_str(it->second->shape) + ", expected " + shape_str(shape));
        }
        TensorPtr t = it->second;
        stored.erase(it);
        return t;
    };

    // The encoder depth is implied by which backbone.<i>.* names exist.
    std::size_t in_width = model.input_dim;
    for (std::size_t i = 0; stored.count("backbone." + std::to_string(i) + ".weight"); ++i) {
        const std::string base = "backbone." + std::to_string(i);
        auto w = stored.at(base + ".weight");
        const std::size_t out_width = w->rows();
        if (w->cols() != in_width) {
            throw DataError(path + ": tensor " + base + ".weight has shape " +
                            shape_str(w->shape) + ", expected input width " +
                            std::to_string(in_width));
        }
        model.backbone.weights.push_back(take(base + ".weight", {out_width, in_width}));
        model.backbone.biases.push_back(take(base + ".bias", {out_width}));
        in_width = out_width;
    }
    if (in_width != model.cfg.d) {
        throw DataError(path + ": encoder output width " + std::to_string(in_width) +
                        " does not match embedding width " + std::to_string(model.cfg.d));
    }

    for (std::size_t l = 0; l < model.cfg.L; ++l) {
        const std::string base = "mpn." + std::to_string(l);
        MpnLayerParams layer;
        for (std::size_t m = 0; m < model.cfg.M; ++m) {
            const std::string head = base + ".head." + std::to_string(m);
            layer.wq.push_back(take(head + ".wq", {model.cfg.head_dim(), model.cfg.d}));
            layer.wk.push_back(take(head + ".wk", {model.cfg.head_dim(), model.cfg.d}));
            layer.wv.push_back(take(head + ".wv", {model.cfg.head_dim(), model.cfg.d}));
        }
        layer.ff1_w = take(base + ".ff1.weight", {model.cfg.ff_dim(), model.cfg.d});
        layer.ff1_b = take(base + ".ff1.bias", {model.cfg.ff_dim()});
        layer.ff2_w = take(base + ".ff2.weight", {model.cfg.d, model.cfg.ff_dim()});
        layer.ff2_b = take(base + ".ff2.bias", {model.cfg.d});
        layer.norm1_gain = take(base + ".norm1.gain", {model.cfg.d});
        layer.norm1_bias = take(base + ".norm1.bias", {model.cfg.d});
        layer.norm2_gain = take(base + ".norm2.gain", {model.cfg.d});
        layer.norm2_bias = take(base + ".norm2.bias", {model.cfg.d});
        model.layers.push_back(std::move(layer));
    }

    if (model.n_classes > 0) {
        model.heads.mpn_w = take("head.mpn.weight", {model.n_classes, model.cfg.d});
        model.heads.mpn_b = take("head.mpn.bias", {model.n_classes});
        model.heads.backbone_w = take("head.backbone.weight", {model.n_classes, model.cfg.d});
        model.heads.backbone_b = take("head.backbone.bias", {model.n_classes});
    }
    if (!stored.empty()) {
        throw DataError(path + ": unexpected tensor " + stored.begin()->first);
    }
    for (const auto& [name, tensor] : all_param_list(model)) {
        if (!all_finite(tensor->data)) throw DataError(path + ": tensor " + name + " not finite");
    }
    return model;
}

}  // namespace gembed
