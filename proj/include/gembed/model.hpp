#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gembed/tensor.hpp"

namespace gembed {

/// Shape and wiring of the message-passing refinement stack.
struct MpnConfig {
    std::size_t d = 32;    // embedding width
    std::size_t L = 1;     // message-passing steps
    std::size_t M = 2;     // attention heads per step
    std::size_t d_ff = 0;  // feed-forward hidden width; 0 means 2*d
    bool include_self = true;         // keep the self-edge in each node's neighborhood
    bool scale_by_head_dim = false;   // divide scores by sqrt(d/M) instead of sqrt(d)

    std::size_t head_dim() const { return d / M; }
    std::size_t ff_dim() const { return d_ff == 0 ? 2 * d : d_ff; }
    double score_divisor() const;
    void validate() const;  // throws ConfigError
};

/// MLP encoder mapping raw feature vectors to d-dimensional embeddings.
/// An empty layer list is the identity (inputs must already be d wide).
struct BackboneParams {
    std::vector<TensorPtr> weights;  // each [out x in]
    std::vector<TensorPtr> biases;   // each [out]
};

/// One message-passing step: M attention heads, a feed-forward block, and
/// two layer norms around the residual connections.
struct MpnLayerParams {
    std::vector<TensorPtr> wq, wk, wv;  // per head, each [d/M x d]
    TensorPtr ff1_w, ff1_b;             // [d_ff x d], [d_ff]
    TensorPtr ff2_w, ff2_b;             // [d x d_ff], [d]
    TensorPtr norm1_gain, norm1_bias;   // [d]
    TensorPtr norm2_gain, norm2_bias;   // [d]
};

/// Two independent linear heads d -> C: one over the refined embeddings,
/// one over the raw backbone embeddings (the auxiliary objective).
struct ClassifierParams {
    TensorPtr mpn_w, mpn_b;            // [C x d], [C]
    TensorPtr backbone_w, backbone_b;  // [C x d], [C]
};

struct Model {
    MpnConfig cfg;
    std::size_t input_dim = 0;
    std::size_t n_classes = 0;  // 0 when the classifier heads are absent
    std::uint64_t seed = 0;     // seed the parameters were initialized from
    BackboneParams backbone;
    std::vector<MpnLayerParams> layers;
    ClassifierParams heads;

    bool has_heads() const { return n_classes > 0; }
};

using NamedParam = std::pair<std::string, TensorPtr>;

// ---- initialization -------------------------------------------------------

/// dims = {input_dim, hidden..., d}; a single-element dims list builds the
/// identity backbone. Linear weights are uniform in +/- sqrt(6/(fan_in+fan_out)),
/// biases zero.
BackboneParams init_backbone(Rng& rng, const std::vector<std::size_t>& dims);
MpnLayerParams init_mpn_layer(Rng& rng, const MpnConfig& cfg);
ClassifierParams init_classifier(Rng& rng, std::size_t d, std::size_t n_classes);

/// Builds the full model; n_classes = 0 skips the classifier heads.
Model init_model(std::uint64_t seed, std::size_t input_dim,
                 const std::vector<std::size_t>& hidden_dims, const MpnConfig& cfg,
                 std::size_t n_classes);

// ---- forward passes ---------------------------------------------------------

/// h = MLP(x) with ReLU between layers (none after the last).
TensorPtr backbone_forward(const BackboneParams& params, const TensorPtr& x);

/// Row-normalized attention matrix of one head: softmax over incoming edges of
/// scores (W_q h_i) . (W_k h_j) / divisor. Row i weights the messages node i
/// receives. With include_self=false the diagonal is masked out before softmax.
TensorPtr attention_scores(const MpnConfig& cfg, const MpnLayerParams& layer, std::size_t head,
                           const TensorPtr& h);

/// One refinement step over the fully connected batch graph: per-head
/// attention-weighted value aggregation, head concat, then two residual +
/// layer-norm blocks (attention block, feed-forward block).
TensorPtr mpn_step(const MpnConfig& cfg, const MpnLayerParams& layer, const TensorPtr& h);

/// Applies all L steps in sequence.
TensorPtr mpn_forward(const MpnConfig& cfg, const std::vector<MpnLayerParams>& layers,
                      const TensorPtr& h0);

/// logits = h W^T + b for one linear head.
TensorPtr classify(const TensorPtr& w, const TensorPtr& b, const TensorPtr& h);

// ---- parameter registry -----------------------------------------------------

/// Stable-ordered (name, tensor) views over the model parameters. The split
/// matches the two learning-rate groups: the encoder, and everything trained
/// on top of it (message passing + both classifier heads).
std::vector<NamedParam> backbone_param_list(const Model& model);
std::vector<NamedParam> mpn_param_list(const Model& model);
std::vector<NamedParam> all_param_list(const Model& model);

}  // namespace gembed
