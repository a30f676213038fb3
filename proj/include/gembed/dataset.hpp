#pragma once

#include <map>
#include <string>
#include <vector>

#include "gembed/tensor.hpp"

namespace gembed {

/// In-memory labeled feature set. Rows are the sample universe the batch
/// graph is built over; class_index maps each label to its row indices.
struct LabeledDataset {
    TensorPtr features;       // [N x input_dim]
    std::vector<int> labels;  // one non-negative label per row
    std::map<int, std::vector<std::size_t>> class_index;

    std::size_t size() const { return labels.size(); }
    std::size_t input_dim() const { return features ? features->cols() : 0; }
    std::size_t num_classes() const { return class_index.size(); }

    /// Rebuilds class_index from labels and checks the invariants.
    void reindex();
};

/// Class-disjoint train/test split (zero-shot protocol: no label appears on
/// both sides).
struct SplitSpec {
    std::vector<int> train_classes;  // ascending
    std::vector<int> test_classes;   // ascending
};

/// One sampled episode: n distinct classes, p rows each.
struct BatchSpec {
    std::vector<std::size_t> rows;  // n*p dataset row indices
    std::vector<int> labels;        // label of each row
    std::size_t n = 0;              // classes in the batch
    std::size_t p = 0;              // samples per class
};

enum class SplitSide { train, test };

/// Text feature file: header "N D", then N lines of "label f_1 ... f_D".
/// Throws DataError with a line number on any malformed content.
LabeledDataset load_dataset(const std::string& path);

/// Writes the same format with 17 significant digits (exact f64 round-trip).
void write_dataset(const std::string& path, const LabeledDataset& ds);

/// Splits classes sorted ascending by id: the first ceil(fraction * C) train,
/// the rest test.
SplitSpec zero_shot_split(const LabeledDataset& ds, double fraction);

/// Draws n distinct classes from the chosen side, then p rows per class
/// (without replacement unless the class holds fewer than p rows).
BatchSpec sample_batch(const LabeledDataset& ds, const SplitSpec& split, SplitSide side,
                       std::size_t n, std::size_t p, Rng& rng);

/// Gathers the batch rows into a dense [n*p x input_dim] tensor.
TensorPtr gather_rows(const LabeledDataset& ds, const std::vector<std::size_t>& rows);

/// Synthetic clustered data: per-class centers uniform in +/-center_scale,
/// samples = center + N(0, noise_sigma^2 I). Deterministic in rng.
LabeledDataset make_blobs(Rng& rng, std::size_t num_classes, std::size_t per_class,
                          std::size_t input_dim, double center_scale, double noise_sigma);

}  // namespace gembed
