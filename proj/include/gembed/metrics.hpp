#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gembed/inference.hpp"
#include "gembed/tensor.hpp"

namespace gembed {

/// Retrieval quality: for each requested K, the fraction of queries whose K
/// nearest neighbors contain at least one row of the query's class.
struct RecallReport {
    std::vector<std::pair<std::size_t, double>> recalls;  // (K, value) in request order
    std::size_t num_queries = 0;
};

struct Clustering {
    std::vector<int> assignment;          // cluster id per row, in [0, K)
    TensorPtr centroids;                  // [K x d]
    double inertia = 0.0;                 // sum of squared distances to assigned centroid
    std::vector<double> inertia_history;  // after each assignment step, non-increasing
};

struct KMeansParams {
    std::size_t max_iter = 300;
    double tol = 1e-6;       // stop when no centroid moves farther than this
    std::size_t restarts = 1;  // keep the lowest-inertia run
};

struct EvalReport {
    RecallReport recall;
    double nmi = 0.0;
    std::size_t num_clusters = 0;
};

/// Computes recall for every K in ks (each must be < index size).
RecallReport recall_at_k(const RetrievalIndex& index, const std::vector<std::size_t>& ks);

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded to
/// the point farthest from its current centroid. Deterministic in rng.
Clustering kmeans(const TensorPtr& points, std::size_t k, Rng& rng,
                  const KMeansParams& params = {});

/// Normalized mutual information 2*I(A;L)/(H(A)+H(L)) over the contingency
/// table, natural logarithms. Two single-cluster partitions score 1.0; if
/// exactly one side has zero entropy the partitions differ and score 0.0.
double nmi(const std::vector<int>& assignment, const std::vector<int>& labels);

/// Full protocol: recall over the index plus NMI of a k-means clustering of
/// the embeddings against the true labels.
EvalReport evaluate(const RetrievalIndex& index, const std::vector<std::size_t>& ks,
                    std::size_t num_clusters, Rng& rng, const KMeansParams& params = {});

/// Line-oriented report:
///   recall@K <K> <value>     (one line per requested K, 6 decimals)
///   nmi <value>
///   summary k<K>=<value> ... nmi=<value>   (single machine-readable line)
std::string format_report(const EvalReport& report);

}  // namespace gembed
