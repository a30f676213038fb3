#pragma once

#include <string>
#include <vector>

#include "gembed/config.hpp"
#include "gembed/dataset.hpp"
#include "gembed/inference.hpp"
#include "gembed/model.hpp"
#include "gembed/tensor.hpp"

namespace gembed {

/// Per-epoch means over the epoch's batches. Disabled loss terms log 0.
struct EpochLog {
    std::size_t epoch = 0;
    double mean_total = 0.0;
    double mean_mpn = 0.0;
    double mean_aux = 0.0;
};

struct TrainResult {
    Model model;
    LabeledDataset dataset;
    SplitSpec split;
    std::vector<EpochLog> history;
    std::size_t mpn_evals = 0;  // refinement forward passes actually run
};

/// Loads cfg.dataset, or generates blobs from the seed when the path is empty.
/// Seed streams are per role: seed+0 data, seed+1 weights, seed+2 batch
/// sampling, seed+3 evaluation — so every run is reproducible end to end.
LabeledDataset load_or_generate(const RunConfig& cfg);

/// The full loop: split classes, initialize, then per batch sample -> encode
/// -> refine -> loss -> backward -> optimizer step. Deterministic in
/// (config, seed).
TrainResult train(const RunConfig& cfg);

/// One line per epoch: "epoch <i> total <v> mpn <v> aux <v>" (6 decimals).
std::string format_history(const std::vector<EpochLog>& history);

/// Embeds one split side in the configured mode: "backbone" encodes only,
/// "mpn-reciprocal" additionally refines each row within its retrieval batch.
RetrievalIndex embed_side(const Model& model, const LabeledDataset& ds, const SplitSpec& split,
                          SplitSide side, const std::string& mode,
                          const BatchBuildParams& params);

/// Finite-difference audit of a freshly initialized model on one sampled
/// batch: per parameter group, the worst relative error between reverse-mode
/// and central-difference gradients.
std::vector<GradCheckGroup> gradcheck_model(const RunConfig& cfg, double h, double tol);

}  // namespace gembed
