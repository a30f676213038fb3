#include "gembed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace gembed {

RecallReport recall_at_k(const RetrievalIndex& index, const std::vector<std::size_t>& ks) {
    if (ks.empty()) throw ConfigError("recall needs at least one K");
    const std::size_t n = index.size();
    std::size_t max_k = 0;
    for (std::size_t k : ks) {
        if (k == 0) throw ConfigError("recall K must be positive");
        max_k = std::max(max_k, k);
    }
    if (max_k >= n) {
        throw ConfigError("recall K=" + std::to_string(max_k) +
                          " must be smaller than the index size " + std::to_string(n));
    }
    // rank of the first same-class neighbor per query (max_k when none found)
    std::vector<std::size_t> first_hit(n, max_k);
    for (std::size_t q = 0; q < n; ++q) {
        const auto nn = knn(index, q, max_k);
        for (std::size_t r = 0; r < nn.size(); ++r) {
            if (index.labels[nn[r]] == index.labels[q]) {
                first_hit[q] = r;
                break;
            }
        }
    }
    RecallReport report;
    report.num_queries = n;
    for (std::size_t k : ks) {
        std::size_t hits = 0;
        for (std::size_t q = 0; q < n; ++q) {
            if (first_hit[q] < k) ++hits;
        }
        report.recalls.emplace_back(k, static_cast<double>(hits) / static_cast<double>(n));
    }
    return report;
}

namespace {

double sq_dist_rows(const TensorPtr& a, std::size_t i, const TensorPtr& b, std::size_t j) {
    double sum = 0.0;
    for (std::size_t c = 0; c < a->cols(); ++c) {
        const double diff = a->at(i, c) - b->at(j, c);
        sum += diff * diff;
    }
    return sum;
}

/// k-means++ D^2 seeding.
TensorPtr seed_centroids(const TensorPtr& points, std::size_t k, Rng& rng) {
    const std::size_t n = points->rows(), d = points->cols();
    auto centroids = Tensor::zeros({k, d});
    std::vector<double> best_dist(n, 1e300);
    std::size_t pick = rng.below(n);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) centroids->at(c, j) = points->at(pick, j);
        if (c + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            best_dist[i] = std::min(best_dist[i], sq_dist_rows(points, i, centroids, c));
            total += best_dist[i];
        }
        if (total <= 0.0) {
            pick = rng.below(n);  // all mass already covered; any point will do
            continue;
        }
        double r = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            r -= best_dist[i];
            if (r <= 0.0) {
                pick = i;
                break;
            }
        }
    }
    return centroids;
}

Clustering kmeans_once(const TensorPtr& points, std::size_t k, Rng& rng,
                       const KMeansParams& params) {
    const std::size_t n = points->rows(), d = points->cols();
    Clustering result;
    result.centroids = seed_centroids(points, k, rng);
    result.assignment.assign(n, 0);
    auto& centroids = result.centroids;

    for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
        // assignment step (ties go to the lowest cluster id)
        for (std::size_t i = 0; i < n; ++i) {
            double best = 1e300;
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double dist = sq_dist_rows(points, i, centroids, c);
                if (dist < best) {
                    best = dist;
                    best_c = static_cast<int>(c);
                }
            }
            result.assignment[i] = best_c;
        }
        // re-seed empty clusters to the currently worst-represented point
        std::vector<std::size_t> counts(k, 0);
        for (int a : result.assignment) ++counts[static_cast<std::size_t>(a)];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            double worst = -1.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(result.assignment[i])] <= 1) continue;
                const double dist = sq_dist_rows(
                    points, i, centroids, static_cast<std::size_t>(result.assignment[i]));
                if (dist > worst) {
                    worst = dist;
                    worst_i = i;
                }
            }
            --counts[static_cast<std::size_t>(result.assignment[worst_i])];
            result.assignment[worst_i] = static_cast<int>(c);
            counts[c] = 1;
            for (std::size_t j = 0; j < d; ++j) centroids->at(c, j) = points->at(worst_i, j);
        }
        // inertia after assignment; Lloyd makes this non-increasing
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            inertia += sq_dist_rows(points, i, centroids,
                                    static_cast<std::size_t>(result.assignment[i]));
        }
        result.inertia_history.push_back(inertia);
        result.inertia = inertia;
        // update step
        auto next = Tensor::zeros({k, d});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                next->at(static_cast<std::size_t>(result.assignment[i]), j) += points->at(i, j);
            }
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t j = 0; j < d; ++j) {
                next->at(c, j) /= static_cast<double>(counts[c]);
            }
            shift = std::max(shift, std::sqrt(sq_dist_rows(next, c, centroids, c)));
        }
        centroids = next;
        if (shift < params.tol) break;
    }
    // final inertia against the converged centroids (the update step only
    // lowers it, so this is <= the last history entry)
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        inertia +=
            sq_dist_rows(points, i, centroids, static_cast<std::size_t>(result.assignment[i]));
    }
    result.inertia = inertia;
    return result;
}

}  // namespace

Clustering kmeans(const TensorPtr& points, std::size_t k, Rng& rng, const KMeansParams& params) {
    const std::size_t n = points->rows();
    if (k == 0 || k > n) {
        throw ConfigError("k-means needs 1 <= K <= N, got K=" + std::to_string(k) + ", N=" +
                          std::to_string(n));
    }
    if (params.restarts == 0) throw ConfigError("k-means needs at least one restart");
    Clustering best;
    for (std::size_t r = 0; r < params.restarts; ++r) {
        auto run = kmeans_once(points, k, rng, params);
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

double nmi(const std::vector<int>& assignment, const std::vector<int>& labels) {
    if (assignment.size() != labels.size()) {
        throw ShapeError("nmi got " + std::to_string(assignment.size()) + " assignments for " +
                         std::to_string(labels.size()) + " labels");
    }
    if (assignment.empty()) throw ConfigError("nmi needs at least one sample");
    const double n = static_cast<double>(assignment.size());
    std::map<int, std::size_t> count_a, count_l;
    std::map<std::pair<int, int>, std::size_t> joint;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        ++count_a[assignment[i]];
        ++count_l[labels[i]];
        ++joint[{assignment[i], labels[i]}];
    }
    auto entropy = [n](const std::map<int, std::size_t>& counts) {
        double h = 0.0;
        for (const auto& [id, c] : counts) {
            const double p = static_cast<double>(c) / n;
            h -= p * std::log(p);
        }
        return h;
    };
    const double ha = entropy(count_a), hl = entropy(count_l);
    if (ha == 0.0 && hl == 0.0) return 1.0;  // both single-cluster: identical partitions
    if (ha == 0.0 || hl == 0.0) return 0.0;  // one side uninformative
    double mi = 0.0;
    for (const auto& [pair, c] : joint) {
        const double pij = static_cast<double>(c) / n;
        const double pi = static_cast<double>(count_a.at(pair.first)) / n;
        const double pj = static_cast<double>(count_l.at(pair.second)) / n;
        mi += pij * std::log(pij / (pi * pj));
    }
    return 2.0 * mi / (ha + hl);
}

EvalReport evaluate(const RetrievalIndex& index, const std::vector<std::size_t>& ks,
                    std::size_t num_clusters, Rng& rng, const KMeansParams& params) {
    EvalReport report;
    report.recall = recall_at_k(index, ks);
    report.num_clusters = num_clusters;
    auto clustering = kmeans(index.embeddings, num_clusters, rng, params);
    report.nmi = nmi(clustering.assignment, index.labels);
    return report;
}

std::string format_report(const EvalReport& report) {
    char buf[64];
    std::string out;
    std::string summary = "summary";
    for (const auto& [k, value] : report.recall.recalls) {
        std::snprintf(buf, sizeof buf, "recall@K %zu %.6f\n", k, value);
        out += buf;
        std::snprintf(buf, sizeof buf, " k%zu=%.6f", k, value);
        summary += buf;
    }
    std::snprintf(buf, sizeof buf, "nmi %.6f\n", report.nmi);
    out += buf;
    std::snprintf(buf, sizeof buf, " nmi=%.6f", report.nmi);
    summary += buf;
    out += summary;
    out += '\n';
    return out;
}

}  // namespace gembed
