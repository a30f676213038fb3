#include "gembed/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "gembed/checkpoint.hpp"

namespace gembed {

const char* member_tag_name(MemberTag tag) {
    switch (tag) {
        case MemberTag::knn: return "knn";
        case MemberTag::reciprocal: return "reciprocal";
        case MemberTag::expanded: return "expanded";
        case MemberTag::fill: return "fill";
    }
    return "?";
}

RetrievalIndex build_index(const TensorPtr& embeddings, const std::vector<int>& labels) {
    const std::size_t n = embeddings->rows(), d = embeddings->cols();
    if (labels.size() != n) {
        throw ShapeError("index got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " embedding rows");
    }
    auto normed = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += embeddings->at(i, j) * embeddings->at(i, j);
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw NumericalError("embedding row " + std::to_string(i) + " cannot be normalized");
        }
        for (std::size_t j = 0; j < d; ++j) normed->at(i, j) = embeddings->at(i, j) / norm;
    }
    RetrievalIndex index;
    index.embeddings = std::move(normed);
    index.labels = labels;
    return index;
}

std::vector<std::size_t> side_rows(const LabeledDataset& ds, const SplitSpec& split,
                                   SplitSide side) {
    const auto& classes = side == SplitSide::train ? split.train_classes : split.test_classes;
    const std::set<int> wanted(classes.begin(), classes.end());
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (wanted.count(ds.labels[i])) rows.push_back(i);
    }
    return rows;
}

TensorPtr raw_backbone_embeddings(const Model& model, const LabeledDataset& ds,
                                  const std::vector<std::size_t>& rows) {
    if (ds.input_dim() != model.input_dim) {
        throw ShapeError("model expects input width " + std::to_string(model.input_dim) +
                         ", dataset has " + std::to_string(ds.input_dim()));
    }
    return backbone_forward(model.backbone, gather_rows(ds, rows));
}

RetrievalIndex extract_backbone_embeddings(const Model& model, const LabeledDataset& ds,
                                           const std::vector<std::size_t>& rows) {
    std::vector<int> labels;
    for (std::size_t r : rows) labels.push_back(ds.labels[r]);
    return build_index(raw_backbone_embeddings(model, ds, rows), labels);
}

namespace {

double sq_dist(const RetrievalIndex& index, std::size_t a, std::size_t b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < index.width(); ++j) {
        const double diff = index.embeddings->at(a, j) - index.embeddings->at(b, j);
        sum += diff * diff;
    }
    return sum;
}

/// All rows ordered by (distance to q, row index), q excluded.
std::vector<std::size_t> ranked_neighbors(const RetrievalIndex& index, std::size_t q) {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(index.size() - 1);
    for (std::size_t j = 0; j < index.size(); ++j) {
        if (j != q) cand.emplace_back(sq_dist(index, q, j), j);
    }
    std::sort(cand.begin(), cand.end());
    std::vector<std::size_t> out;
    out.reserve(cand.size());
    for (const auto& [dist, j] : cand) out.push_back(j);
    return out;
}

}  // namespace

std::vector<std::size_t> knn(const RetrievalIndex& index, std::size_t q, std::size_t k) {
    if (q >= index.size()) throw ConfigError("query row " + std::to_string(q) + " out of range");
    if (k >= index.size()) {
        throw ConfigError("k=" + std::to_string(k) + " must be smaller than the index size " +
                          std::to_string(index.size()));
    }
    auto ranked = ranked_neighbors(index, q);
    ranked.resize(k);
    return ranked;
}

namespace {

std::vector<std::size_t> reciprocal_neighbors(const RetrievalIndex& index, std::size_t g,
                                              std::size_t k,
                                              std::vector<std::vector<std::size_t>>& knn_cache) {
    auto knn_of = [&](std::size_t i) -> const std::vector<std::size_t>& {
        if (knn_cache[i].empty()) knn_cache[i] = knn(index, i, k);
        return knn_cache[i];
    };
    std::vector<std::size_t> out;
    for (std::size_t h : knn_of(g)) {
        const auto& back = knn_of(h);
        if (std::find(back.begin(), back.end(), g) != back.end()) out.push_back(h);
    }
    return out;
}

}  // namespace

ReciprocalBatch reciprocal_knn_batch(const RetrievalIndex& index, std::size_t q,
                                     const BatchBuildParams& params) {
    if (params.k < 2) throw ConfigError("reciprocal batches need k >= 2");
    if (!(params.expansion_alpha >= 0.0 && params.expansion_alpha <= 1.0)) {
        throw ConfigError("expansion_alpha must lie in [0, 1]");
    }
    if (params.k_r < 1 || params.k_r > index.size()) {
        throw ConfigError("batch size k_r=" + std::to_string(params.k_r) +
                          " must lie in [1, " + std::to_string(index.size()) + "]");
    }
    if (params.k >= index.size()) {
        throw ConfigError("k=" + std::to_string(params.k) + " must be smaller than the index size");
    }

    // Tags record the first rule that admitted each member.
    std::vector<std::vector<std::size_t>> cache_k(index.size());
    std::vector<std::vector<std::size_t>> cache_half(index.size());
    std::map<std::size_t, MemberTag> members;
    members.emplace(q, MemberTag::knn);

    const auto recip_q = reciprocal_neighbors(index, q, params.k, cache_k);
    for (std::size_t g : recip_q) members.emplace(g, MemberTag::reciprocal);

    const std::size_t k_half = (params.k + 1) / 2;  // ceil(k/2)
    for (std::size_t g : recip_q) {
        const auto recip_g = reciprocal_neighbors(index, g, k_half, cache_half);
        if (recip_g.empty()) continue;
        std::size_t overlap = 0;
        for (std::size_t h : recip_g) {
            if (std::find(recip_q.begin(), recip_q.end(), h) != recip_q.end()) ++overlap;
        }
        if (static_cast<double>(overlap) >=
            params.expansion_alpha * static_cast<double>(recip_g.size())) {
            for (std::size_t h : recip_g) members.emplace(h, MemberTag::expanded);
        }
    }

    // Order members as q, then ascending (distance to q, index); trim or fill
    // with q's next-nearest unused rows.
    const auto ranked = ranked_neighbors(index, q);
    ReciprocalBatch batch;
    batch.query = q;
    batch.members.push_back({q, members.at(q)});
    for (std::size_t j : ranked) {
        if (batch.members.size() == params.k_r) break;
        const auto it = members.find(j);
        if (it != members.end()) batch.members.push_back({j, it->second});
    }
    for (std::size_t j : ranked) {
        if (batch.members.size() == params.k_r) break;
        if (!members.count(j)) batch.members.push_back({j, MemberTag::fill});
    }
    return batch;
}

TensorPtr refine_with_mpn(const Model& model, const RetrievalIndex& index, const TensorPtr& raw,
                          std::size_t q, const BatchBuildParams& params) {
    if (model.layers.empty()) throw ConfigError("model has no message-passing layers");
    if (raw->rows() != index.size() || raw->cols() != model.cfg.d) {
        throw ShapeError("raw embeddings " + shape_str(raw->shape) + " do not match index size " +
                         std::to_string(index.size()) + " and width " +
                         std::to_string(model.cfg.d));
    }
    const auto batch = reciprocal_knn_batch(index, q, params);
    auto h0 = Tensor::zeros({batch.members.size(), model.cfg.d});
    for (std::size_t i = 0; i < batch.members.size(); ++i) {
        for (std::size_t j = 0; j < model.cfg.d; ++j) {
            h0->at(i, j) = raw->at(batch.members[i].index, j);
        }
    }
    auto refined = mpn_forward(model.cfg, model.layers, h0);
    // q sits in row 0 of its batch
    double sq = 0.0;
    for (std::size_t j = 0; j < model.cfg.d; ++j) sq += refined->at(0, j) * refined->at(0, j);
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw NumericalError("refined embedding of row " + std::to_string(q) +
                             " cannot be normalized");
    }
    auto out = Tensor::zeros({1, model.cfg.d});
    for (std::size_t j = 0; j < model.cfg.d; ++j) out->at(0, j) = refined->at(0, j) / norm;
    return out;
}

RetrievalIndex extract_refined_embeddings(const Model& model, const LabeledDataset& ds,
                                          const std::vector<std::size_t>& rows,
                                          const BatchBuildParams& params) {
    auto base = extract_backbone_embeddings(model, ds, rows);
    auto raw = raw_backbone_embeddings(model, ds, rows);
    auto refined = Tensor::zeros({rows.size(), model.cfg.d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto row = refine_with_mpn(model, base, raw, i, params);
        for (std::size_t j = 0; j < model.cfg.d; ++j) refined->at(i, j) = row->at(0, j);
    }
    RetrievalIndex index;
    index.embeddings = std::move(refined);  // rows already normalized
    index.labels = base.labels;
    return index;
}

RetrievalIndex ensemble_concat(const std::vector<const Model*>& models, const LabeledDataset& ds,
                               const std::vector<std::size_t>& rows) {
    if (models.size() < 2) throw ConfigError("an ensemble needs at least two models");
    for (const Model* m : models) {
        if (m->cfg.d != models[0]->cfg.d) {
            throw ConfigError("ensemble members disagree on embedding width: " +
                              std::to_string(m->cfg.d) + " vs " +
                              std::to_string(models[0]->cfg.d));
        }
    }
    std::vector<TensorPtr> parts;
    std::vector<int> labels;
    for (const Model* m : models) {
        auto index = extract_backbone_embeddings(*m, ds, rows);
        if (labels.empty()) labels = index.labels;
        parts.push_back(index.embeddings);
    }
    return build_index(concat_last_axis(parts), labels);
}

RetrievalIndex ensemble_concat(const EnsembleSpec& spec, const LabeledDataset& ds,
                               const std::vector<std::size_t>& rows) {
    std::vector<Model> loaded;
    loaded.reserve(spec.checkpoint_paths.size());
    for (const auto& path : spec.checkpoint_paths) loaded.push_back(load_checkpoint(path));
    std::vector<const Model*> views;
    for (const Model& m : loaded) views.push_back(&m);
    return ensemble_concat(views, ds, rows);
}

}  // namespace gembed
