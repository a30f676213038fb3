#pragma once

#include <string>
#include <vector>

#include "gembed/dataset.hpp"
#include "gembed/model.hpp"

namespace gembed {

/// Retrieval database: L2-normalized embeddings with their labels. Distances
/// are Euclidean over the normalized rows (rank-equivalent to cosine).
struct RetrievalIndex {
    TensorPtr embeddings;     // [N x width], every row unit norm
    std::vector<int> labels;  // one per row

    std::size_t size() const { return labels.size(); }
    std::size_t width() const { return embeddings ? embeddings->cols() : 0; }
};

/// How a member entered a query's retrieval batch.
enum class MemberTag { knn, reciprocal, expanded, fill };

struct ReciprocalBatch {
    std::size_t query = 0;
    struct Member {
        std::size_t index;
        MemberTag tag;
    };
    std::vector<Member> members;  // query first, size exactly k_r
};

/// Parameters of reciprocal-kNN batch construction.
struct BatchBuildParams {
    std::size_t k = 10;                  // neighborhood size
    double expansion_alpha = 2.0 / 3.0;  // overlap threshold for merging
    std::size_t k_r = 60;                // final batch size
};

/// Ordered list of model checkpoint paths whose embeddings get concatenated.
struct EnsembleSpec {
    std::vector<std::string> checkpoint_paths;
};

const char* member_tag_name(MemberTag tag);

/// L2-normalizes each row and pairs it with the labels. A zero row cannot be
/// normalized and raises NumericalError naming the row.
RetrievalIndex build_index(const TensorPtr& embeddings, const std::vector<int>& labels);

/// Dataset rows whose label belongs to the chosen split side.
std::vector<std::size_t> side_rows(const LabeledDataset& ds, const SplitSpec& split,
                                   SplitSide side);

/// Runs the encoder over the given dataset rows; returns the normalized index.
RetrievalIndex extract_backbone_embeddings(const Model& model, const LabeledDataset& ds,
                                           const std::vector<std::size_t>& rows);

/// Same pass without normalization: the refinement network consumes raw
/// encoder outputs, exactly as during training.
TensorPtr raw_backbone_embeddings(const Model& model, const LabeledDataset& ds,
                                  const std::vector<std::size_t>& rows);

/// The k nearest rows to q, excluding q, ascending distance; ties broken by
/// ascending row index. Requires k < index size.
std::vector<std::size_t> knn(const RetrievalIndex& index, std::size_t q, std::size_t k);

/// Builds q's retrieval batch: reciprocal k-nearest neighbors, optional
/// expansion by members' reciprocal ceil(k/2)-neighborhoods when the overlap
/// with the reciprocal set reaches expansion_alpha of that neighborhood, then
/// truncation/fill to exactly k_r rows by ascending distance to q.
ReciprocalBatch reciprocal_knn_batch(const RetrievalIndex& index, std::size_t q,
                                     const BatchBuildParams& params);

/// Refines q's embedding: assembles q's reciprocal batch, feeds the batch's
/// raw encoder outputs through the message-passing stack, and returns q's
/// refined row re-normalized. raw must be row-parallel to the index.
TensorPtr refine_with_mpn(const Model& model, const RetrievalIndex& index, const TensorPtr& raw,
                          std::size_t q, const BatchBuildParams& params);

/// Full refined index: every row refined within its own batch.
RetrievalIndex extract_refined_embeddings(const Model& model, const LabeledDataset& ds,
                                          const std::vector<std::size_t>& rows,
                                          const BatchBuildParams& params);

/// Concatenates each model's normalized embeddings along the feature axis and
/// re-normalizes. All models must share the embedding width.
RetrievalIndex ensemble_concat(const std::vector<const Model*>& models, const LabeledDataset& ds,
                               const std::vector<std::size_t>& rows);

/// Checkpoint-loading convenience over the pointer overload.
RetrievalIndex ensemble_concat(const EnsembleSpec& spec, const LabeledDataset& ds,
                               const std::vector<std::size_t>& rows);

}  // namespace gembed
