#include "gembed/objective.hpp"

#include <cmath>

namespace gembed {

void LossConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("smoothing must lie in [0, 1)");
    if (!(aux_weight >= 0.0)) throw ConfigError("aux_weight must be non-negative");
    if (!use_mpn_loss && !use_aux_loss) {
        throw ConfigError("at least one loss term must be enabled");
    }
}

TensorPtr smoothed_ce(const TensorPtr& logits, const std::vector<int>& labels, double T,
                      double eps) {
    if (!(T > 0.0)) throw ConfigError("temperature must be positive");
    if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("smoothing must lie in [0, 1)");
    const std::size_t B = logits->rows(), C = logits->cols();
    if (labels.size() != B) {
        throw ShapeError("got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(B) + " logit rows");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= C) {
            throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(C) +
                            ")");
        }
    }
    if (!all_finite(logits->data)) throw NumericalError("cross-entropy logits are not finite");

    // log-softmax of logits/T per row, then mean of -sum(target * logp)
    std::vector<double> probs(B * C);
    double loss = 0.0;
    const double off_target = eps / static_cast<double>(C);
    for (std::size_t i = 0; i < B; ++i) {
        double mx = logits->at(i, 0) / T;
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits->at(i, c) / T);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(logits->at(i, c) / T - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t c = 0; c < C; ++c) {
            const double logp = logits->at(i, c) / T - lse;
            probs[i * C + c] = std::exp(logp);
            const double target =
                off_target + (static_cast<std::size_t>(labels[i]) == c ? 1.0 - eps : 0.0);
            loss -= target * logp;
        }
    }
    loss /= static_cast<double>(B);

    return make_node({1}, {loss}, "smoothed_ce", {logits},
                     [logits, labels, T, eps, B, C, probs = std::move(probs),
                      off_target](Tensor& t) {
        if (!logits->requires_grad) return;
        logits->ensure_grad();
        const double upstream = t.grad[0];
        const double inv = upstream / (static_cast<double>(B) * T);
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t c = 0; c < C; ++c) {
                const double target =
                    off_target + (static_cast<std::size_t>(labels[i]) == c ? 1.0 - eps : 0.0);
                logits->grad[i * C + c] += inv * (probs[i * C + c] - target);
            }
        }
    });
}

LossTerms combined_loss_terms(const LossConfig& cfg, const TensorPtr& mpn_logits,
                              const TensorPtr& backbone_logits, const std::vector<int>& labels) {
    cfg.validate();
    LossTerms terms;
    if (cfg.use_mpn_loss) {
        if (!mpn_logits) throw ConfigError("mpn loss enabled but no refined logits given");
        terms.mpn = smoothed_ce(mpn_logits, labels, cfg.temperature, cfg.smoothing);
        terms.total = terms.mpn;
    }
    if (cfg.use_aux_loss) {
        if (!backbone_logits) throw ConfigError("aux loss enabled but no encoder logits given");
        terms.aux = smoothed_ce(backbone_logits, labels, cfg.temperature, cfg.smoothing);
        auto weighted = scale(terms.aux, cfg.aux_weight);
        terms.total = terms.total ? add(terms.total, weighted) : weighted;
    }
    return terms;
}

TensorPtr combined_loss(const LossConfig& cfg, const TensorPtr& mpn_logits,
                        const TensorPtr& backbone_logits, const std::vector<int>& labels) {
    return combined_loss_terms(cfg, mpn_logits, backbone_logits, labels).total;
}

void radam_add_group(OptimizerState& state, const std::vector<NamedParam>& params, double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    for (const auto& [name, p] : params) {
        if (!p->requires_grad) {
            throw ConfigError("optimizer parameter '" + name + "' does not require grad");
        }
        OptimizerState::Slot slot;
        slot.name = name;
        slot.param = p;
        slot.lr = lr;
        slot.m.assign(p->size(), 0.0);
        slot.v.assign(p->size(), 0.0);
        state.slots.push_back(std::move(slot));
    }
}

void radam_step(OptimizerState& state) {
    const RAdamConfig& c = state.cfg;
    const std::uint64_t t = ++state.t;
    const double beta1_t = std::pow(c.beta1, static_cast<double>(t));
    const double beta2_t = std::pow(c.beta2, static_cast<double>(t));
    const double rho_inf = 2.0 / (1.0 - c.beta2) - 1.0;
    const double rho_t =
        rho_inf - 2.0 * static_cast<double>(t) * beta2_t / (1.0 - beta2_t);
    const bool rectified = rho_t > 4.0;
    double r = 1.0;
    if (rectified) {
        r = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                      ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    }
    for (auto& slot : state.slots) {
        slot.param->ensure_grad();
        for (std::size_t i = 0; i < slot.param->size(); ++i) {
            const double g = slot.param->grad[i];
            if (!std::isfinite(g)) {
                throw NumericalError("training diverged: non-finite gradient in " + slot.name);
            }
            slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * g;
            slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * g * g;
            const double mhat = slot.m[i] / (1.0 - beta1_t);
            double update;
            if (rectified) {
                update = slot.lr * r * mhat * std::sqrt(1.0 - beta2_t) /
                         (std::sqrt(slot.v[i]) + c.eps);
            } else {
                update = slot.lr * mhat;
            }
            if (c.weight_decay > 0.0) {
                slot.param->data[i] -= slot.lr * c.weight_decay * slot.param->data[i];
            }
            slot.param->data[i] -= update;
        }
    }
}

void radam_zero_grad(OptimizerState& state) {
    for (auto& slot : state.slots) slot.param->zero_grad();
}

}  // namespace gembed
