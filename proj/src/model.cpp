#include "gembed/model.hpp"

#include <cmath>

namespace gembed {

double MpnConfig::score_divisor() const {
    return std::sqrt(static_cast<double>(scale_by_head_dim ? head_dim() : d));
}

void MpnConfig::validate() const {
    if (L < 1) throw ConfigError("message-passing steps L must be >= 1, got " + std::to_string(L));
    if (M < 1) throw ConfigError("attention heads M must be >= 1, got " + std::to_string(M));
    if (d < 1) throw ConfigError("embedding width d must be >= 1");
    if (d % M != 0) {
        throw ConfigError("embedding width d=" + std::to_string(d) +
                          " must be divisible by heads M=" + std::to_string(M));
    }
    if (ff_dim() < 1) throw ConfigError("feed-forward width must be >= 1");
}

namespace {

TensorPtr glorot(Rng& rng, std::size_t fan_out, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return random_uniform(rng, {fan_out, fan_in}, -bound, bound, /*requires_grad=*/true);
}

}  // namespace

BackboneParams init_backbone(Rng& rng, const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw ConfigError("backbone needs at least an input width");
    BackboneParams p;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        p.weights.push_back(glorot(rng, dims[i + 1], dims[i]));
        p.biases.push_back(Tensor::zeros({dims[i + 1]}, /*requires_grad=*/true));
    }
    return p;
}

MpnLayerParams init_mpn_layer(Rng& rng, const MpnConfig& cfg) {
    MpnLayerParams p;
    for (std::size_t m = 0; m < cfg.M; ++m) {
        p.wq.push_back(glorot(rng, cfg.head_dim(), cfg.d));
        p.wk.push_back(glorot(rng, cfg.head_dim(), cfg.d));
        p.wv.push_back(glorot(rng, cfg.head_dim(), cfg.d));
    }
    p.ff1_w = glorot(rng, cfg.ff_dim(), cfg.d);
    p.ff1_b = Tensor::zeros({cfg.ff_dim()}, true);
    p.ff2_w = glorot(rng, cfg.d, cfg.ff_dim());
    p.ff2_b = Tensor::zeros({cfg.d}, true);
    p.norm1_gain = Tensor::full({cfg.d}, 1.0, true);
    p.norm1_bias = Tensor::zeros({cfg.d}, true);
    p.norm2_gain = Tensor::full({cfg.d}, 1.0, true);
    p.norm2_bias = Tensor::zeros({cfg.d}, true);
    return p;
}

ClassifierParams init_classifier(Rng& rng, std::size_t d, std::size_t n_classes) {
    ClassifierParams p;
    p.mpn_w = glorot(rng, n_classes, d);
    p.mpn_b = Tensor::zeros({n_classes}, true);
    p.backbone_w = glorot(rng, n_classes, d);
    p.backbone_b = Tensor::zeros({n_classes}, true);
    return p;
}

Model init_model(std::uint64_t seed, std::size_t input_dim,
                 const std::vector<std::size_t>& hidden_dims, const MpnConfig& cfg,
                 std::size_t n_classes) {
    cfg.validate();
    if (input_dim == 0) throw ConfigError("input width must be positive");
    Model model;
    model.cfg = cfg;
    model.input_dim = input_dim;
    model.n_classes = n_classes;
    model.seed = seed;
    Rng rng(seed);
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(cfg.d);
    model.backbone = init_backbone(rng, dims);
    for (std::size_t l = 0; l < cfg.L; ++l) model.layers.push_back(init_mpn_layer(rng, cfg));
    if (n_classes > 0) model.heads = init_classifier(rng, cfg.d, n_classes);
    return model;
}

TensorPtr backbone_forward(const BackboneParams& params, const TensorPtr& x) {
    TensorPtr h = x;
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        h = add_row_vector(matmul(h, transpose(params.weights[i])), params.biases[i]);
        if (i + 1 < params.weights.size()) h = relu(h);
    }
    return h;
}

TensorPtr attention_scores(const MpnConfig& cfg, const MpnLayerParams& layer, std::size_t head,
                           const TensorPtr& h) {
    if (head >= cfg.M) {
        throw ConfigError("head index " + std::to_string(head) + " out of range for M=" +
                          std::to_string(cfg.M));
    }
    auto q = matmul(h, transpose(layer.wq[head]));  // [B x d/M]
    auto k = matmul(h, transpose(layer.wk[head]));
    auto raw = scale(matmul(q, transpose(k)), 1.0 / cfg.score_divisor());  // [B x B]
    if (!cfg.include_self) {
        // a large negative score underflows to an exact 0 after softmax
        raw = mask_diagonal(raw, -1e30);
    }
    return row_softmax(raw);
}

TensorPtr mpn_step(const MpnConfig& cfg, const MpnLayerParams& layer, const TensorPtr& h) {
    if (h->cols() != cfg.d) {
        throw ShapeError("mpn_step expects width " + std::to_string(cfg.d) + ", got " +
                         shape_str(h->shape));
    }
    std::vector<TensorPtr> head_outputs;
    for (std::size_t m = 0; m < cfg.M; ++m) {
        auto att = attention_scores(cfg, layer, m, h);
        auto values = matmul(h, transpose(layer.wv[m]));   // [B x d/M]
        head_outputs.push_back(matmul(att, values));       // weighted message sum
    }
    auto mixed = concat_last_axis(head_outputs);  // back to [B x d]
    auto f = layer_norm(add(mixed, h), layer.norm1_gain, layer.norm1_bias);
    auto ff = add_row_vector(
        matmul(relu(add_row_vector(matmul(f, transpose(layer.ff1_w)), layer.ff1_b)),
               transpose(layer.ff2_w)),
        layer.ff2_b);
    return layer_norm(add(ff, f), layer.norm2_gain, layer.norm2_bias);
}

TensorPtr mpn_forward(const MpnConfig& cfg, const std::vector<MpnLayerParams>& layers,
                      const TensorPtr& h0) {
    if (layers.size() != cfg.L) {
        throw ConfigError("expected " + std::to_string(cfg.L) + " message-passing layers, got " +
                          std::to_string(layers.size()));
    }
    TensorPtr h = h0;
    for (const auto& layer : layers) h = mpn_step(cfg, layer, h);
    return h;
}

TensorPtr classify(const TensorPtr& w, const TensorPtr& b, const TensorPtr& h) {
    return add_row_vector(matmul(h, transpose(w)), b);
}

std::vector<NamedParam> backbone_param_list(const Model& model) {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < model.backbone.weights.size(); ++i) {
        const std::string base = "backbone." + std::to_string(i);
        out.emplace_back(base + ".weight", model.backbone.weights[i]);
        out.emplace_back(base + ".bias", model.backbone.biases[i]);
    }
    return out;
}

std::vector<NamedParam> mpn_param_list(const Model& model) {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        const std::string base = "mpn." + std::to_string(l);
        for (std::size_t m = 0; m < layer.wq.size(); ++m) {
            const std::string head = base + ".head." + std::to_string(m);
            out.emplace_back(head + ".wq", layer.wq[m]);
            out.emplace_back(head + ".wk", layer.wk[m]);
            out.emplace_back(head + ".wv", layer.wv[m]);
        }
        out.emplace_back(base + ".ff1.weight", layer.ff1_w);
        out.emplace_back(base + ".ff1.bias", layer.ff1_b);
        out.emplace_back(base + ".ff2.weight", layer.ff2_w);
        out.emplace_back(base + ".ff2.bias", layer.ff2_b);
        out.emplace_back(base + ".norm1.gain", layer.norm1_gain);
        out.emplace_back(base + ".norm1.bias", layer.norm1_bias);
        out.emplace_back(base + ".norm2.gain", layer.norm2_gain);
        out.emplace_back(base + ".norm2.bias", layer.norm2_bias);
    }
    if (model.has_heads()) {
        out.emplace_back("head.mpn.weight", model.heads.mpn_w);
        out.emplace_back("head.mpn.bias", model.heads.mpn_b);
        out.emplace_back("head.backbone.weight", model.heads.backbone_w);
        out.emplace_back("head.backbone.bias", model.heads.backbone_b);
    }
    return out;
}

std::vector<NamedParam> all_param_list(const Model& model) {
    auto out = backbone_param_list(model);
    auto rest = mpn_param_list(model);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

}  // namespace gembed
