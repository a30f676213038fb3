#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gembed/inference.hpp"
#include "gembed/model.hpp"
#include "gembed/objective.hpp"

namespace gembed {

/// One experiment, fully described by a flat key=value file. Every knob has a
/// documented default; parsing rejects unknown keys, duplicate keys, and any
/// value violating a module precondition, always naming the offending key.
struct RunConfig {
    std::uint64_t seed = 0;

    // data: a feature file, or synthetic blobs when `dataset` is empty
    std::string dataset;
    std::size_t blob_classes = 40;
    std::size_t blob_per_class = 30;
    std::size_t blob_dim = 16;
    double blob_center_scale = 3.0;
    double blob_noise = 0.73;
    double train_fraction = 0.5;

    // encoder: hidden widths; the embedding width d is always appended
    std::vector<std::size_t> hidden_dims = {128};

    MpnConfig mpn;    // d, mpn_steps, heads, ff_dim, include_self, scale_by_head_dim
    LossConfig loss;  // temperature, smoothing, aux_weight, use_mpn_loss, use_aux_loss

    RAdamConfig optim;  // beta1, beta2, adam_eps, weight_decay
    double lr_mpn = 1e-3;
    double lr_backbone = 1e-4;

    // batch geometry: n classes x p samples per episode
    std::size_t classes_per_batch = 10;
    std::size_t samples_per_class = 6;
    std::size_t epochs = 30;

    // inference: "backbone" or "mpn-reciprocal"
    std::string inference_mode = "backbone";
    std::size_t knn_k = 10;
    double expansion_alpha = 2.0 / 3.0;
    std::size_t k_r = 0;  // 0 means classes_per_batch * samples_per_class

    // evaluation
    std::vector<std::size_t> recall_ks = {1, 2, 4, 8};
    std::size_t clusters = 0;  // 0 means one per class on the evaluated side
    std::string out_dir = "out";

    std::size_t batch_size() const { return classes_per_batch * samples_per_class; }
    BatchBuildParams batch_build() const;
    void validate() const;  // throws ConfigError naming the key
};

/// Parses key=value lines ('#' starts a comment, blank lines allowed) and
/// validates the result. Throws ConfigError with the line number or key name.
RunConfig parse_config(const std::string& text);

RunConfig load_config(const std::string& path);  // DataError if unreadable

}  // namespace gembed
