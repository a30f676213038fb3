#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gembed/model.hpp"
#include "gembed/tensor.hpp"

namespace gembed {

/// Which classification losses to train on and how to weight them.
struct LossConfig {
    double temperature = 0.1;  // logits are divided by T before softmax
    double smoothing = 0.1;    // label-smoothing mass spread over all classes
    double aux_weight = 1.0;   // weight of the encoder-head loss term
    bool use_mpn_loss = true;  // loss over the refined embeddings
    bool use_aux_loss = true;  // loss over the raw encoder embeddings

    void validate() const;  // throws ConfigError
};

/// Mean over the batch of cross-entropy between softmax(logits/T) and the
/// smoothed targets (1-eps)*onehot + eps/C. Returns a differentiable scalar;
/// the backward pass is fused: dlogits = (p - target) / (B*T).
TensorPtr smoothed_ce(const TensorPtr& logits, const std::vector<int>& labels, double T,
                      double eps);

/// use_mpn_loss * ce(mpn_logits) + aux_weight * use_aux_loss * ce(backbone_logits).
/// A logits tensor may be null when its flag is off (that branch is never touched).
TensorPtr combined_loss(const LossConfig& cfg, const TensorPtr& mpn_logits,
                        const TensorPtr& backbone_logits, const std::vector<int>& labels);

/// Same objective with the unweighted terms exposed for logging; a term is
/// null when its flag is off.
struct LossTerms {
    TensorPtr total;
    TensorPtr mpn;  // ce over the refined embeddings' logits
    TensorPtr aux;  // ce over the encoder logits, before aux_weight
};

LossTerms combined_loss_terms(const LossConfig& cfg, const TensorPtr& mpn_logits,
                              const TensorPtr& backbone_logits, const std::vector<int>& labels);

// ---- optimizer --------------------------------------------------------------

struct RAdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled, applied directly to the weights
};

/// Rectified Adam. Parameter groups may carry different learning rates; the
/// moment estimates live here, parallel to each registered tensor.
struct OptimizerState {
    struct Slot {
        std::string name;
        TensorPtr param;
        double lr;
        std::vector<double> m, v;  // first/second moment running averages
    };
    RAdamConfig cfg;
    std::uint64_t t = 0;  // completed steps
    std::vector<Slot> slots;
};

void radam_add_group(OptimizerState& state, const std::vector<NamedParam>& params, double lr);

/// One update from the gradients currently stored on the registered tensors.
/// Uses the rectified adaptive step once the variance estimate is tractable
/// (rho_t > 4), plain bias-corrected momentum before that. Throws
/// NumericalError on non-finite gradients.
void radam_step(OptimizerState& state);

void radam_zero_grad(OptimizerState& state);

}  // namespace gembed
