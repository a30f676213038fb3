#include "gembed/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "gembed/error.hpp"
#include "gembed/objective.hpp"

namespace gembed {

namespace {

std::map<int, int> train_label_remap(const SplitSpec& split) {
    std::map<int, int> remap;  // original class id -> contiguous [0, C_train)
    for (std::size_t i = 0; i < split.train_classes.size(); ++i) {
        remap[split.train_classes[i]] = static_cast<int>(i);
    }
    return remap;
}

std::vector<int> remap_labels(const std::map<int, int>& remap, const std::vector<int>& labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (int label : labels) out.push_back(remap.at(label));
    return out;
}

/// Group label for gradcheck reporting: the encoder and each head-projection
/// stand alone; feed-forward and norm tensors fold per step.
std::string group_label(const std::string& name) {
    if (name.rfind("backbone.", 0) == 0) return "backbone";
    if (name.rfind("head.", 0) == 0) return name.substr(0, name.rfind('.'));
    if (name.rfind("mpn.", 0) == 0) {
        if (name.find(".head.") != std::string::npos) return name;
        const auto step_end = name.find('.', 4);
        const std::string step = name.substr(0, step_end);
        if (name.find(".ff", step_end) == step_end) return step + ".ff";
        return step + ".norms";
    }
    return name;
}

}  // namespace

LabeledDataset load_or_generate(const RunConfig& cfg) {
    if (!cfg.dataset.empty()) return load_dataset(cfg.dataset);
    Rng rng(cfg.seed);
    return make_blobs(rng, cfg.blob_classes, cfg.blob_per_class, cfg.blob_dim,
                      cfg.blob_center_scale, cfg.blob_noise);
}

TrainResult train(const RunConfig& cfg) {
    cfg.validate();
    TrainResult result;
    result.dataset = load_or_generate(cfg);
    result.split = zero_shot_split(result.dataset, cfg.train_fraction);
    if (cfg.classes_per_batch > result.split.train_classes.size()) {
        throw ConfigError("config key 'classes_per_batch': " +
                          std::to_string(cfg.classes_per_batch) + " exceeds the " +
                          std::to_string(result.split.train_classes.size()) + " training classes");
    }

    result.model = init_model(cfg.seed + 1, result.dataset.input_dim(), cfg.hidden_dims, cfg.mpn,
                              result.split.train_classes.size());
    OptimizerState opt;
    opt.cfg = cfg.optim;
    radam_add_group(opt, backbone_param_list(result.model), cfg.lr_backbone);
    radam_add_group(opt, mpn_param_list(result.model), cfg.lr_mpn);

    const auto remap = train_label_remap(result.split);
    Rng sampler(cfg.seed + 2);
    const std::size_t train_rows =
        side_rows(result.dataset, result.split, SplitSide::train).size();
    const std::size_t batch_rows = cfg.batch_size();
    const std::size_t batches_per_epoch = (train_rows + batch_rows - 1) / batch_rows;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double sum_total = 0.0, sum_mpn = 0.0, sum_aux = 0.0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const auto batch = sample_batch(result.dataset, result.split, SplitSide::train,
                                            cfg.classes_per_batch, cfg.samples_per_class, sampler);
            const auto x = gather_rows(result.dataset, batch.rows);
            const auto encoded = backbone_forward(result.model.backbone, x);
            TensorPtr mpn_logits, backbone_logits;
            if (cfg.loss.use_mpn_loss) {
                const auto refined = mpn_forward(cfg.mpn, result.model.layers, encoded);
                ++result.mpn_evals;
                mpn_logits =
                    classify(result.model.heads.mpn_w, result.model.heads.mpn_b, refined);
            }
            if (cfg.loss.use_aux_loss) {
                backbone_logits = classify(result.model.heads.backbone_w,
                                           result.model.heads.backbone_b, encoded);
            }
            const auto terms = combined_loss_terms(cfg.loss, mpn_logits, backbone_logits,
                                                   remap_labels(remap, batch.labels));
            radam_zero_grad(opt);
            terms.total->backward();
            radam_step(opt);
            sum_total += terms.total->item();
            if (terms.mpn) sum_mpn += terms.mpn->item();
            if (terms.aux) sum_aux += terms.aux->item();
        }
        const double scale = 1.0 / static_cast<double>(batches_per_epoch);
        result.history.push_back(
            {epoch, sum_total * scale, sum_mpn * scale, sum_aux * scale});
    }
    return result;
}

std::string format_history(const std::vector<EpochLog>& history) {
    std::string out;
    char line[160];
    for (const auto& e : history) {
        std::snprintf(line, sizeof line, "epoch %zu total %.6f mpn %.6f aux %.6f\n", e.epoch,
                      e.mean_total, e.mean_mpn, e.mean_aux);
        out += line;
    }
    return out;
}

RetrievalIndex embed_side(const Model& model, const LabeledDataset& ds, const SplitSpec& split,
                          SplitSide side, const std::string& mode,
                          const BatchBuildParams& params) {
    const auto rows = side_rows(ds, split, side);
    if (mode == "backbone") return extract_backbone_embeddings(model, ds, rows);
    if (mode == "mpn-reciprocal") return extract_refined_embeddings(model, ds, rows, params);
    throw ConfigError("config key 'inference_mode': unknown mode '" + mode + "'");
}

std::vector<GradCheckGroup> gradcheck_model(const RunConfig& cfg, double h, double tol) {
    cfg.validate();
    const auto ds = load_or_generate(cfg);
    const auto split = zero_shot_split(ds, cfg.train_fraction);
    if (cfg.classes_per_batch > split.train_classes.size()) {
        throw ConfigError("config key 'classes_per_batch': " +
                          std::to_string(cfg.classes_per_batch) + " exceeds the " +
                          std::to_string(split.train_classes.size()) + " training classes");
    }
    Model model = init_model(cfg.seed + 1, ds.input_dim(), cfg.hidden_dims, cfg.mpn,
                             split.train_classes.size());
    Rng sampler(cfg.seed + 2);
    const auto batch = sample_batch(ds, split, SplitSide::train, cfg.classes_per_batch,
                                    cfg.samples_per_class, sampler);
    const auto labels = remap_labels(train_label_remap(split), batch.labels);

    const auto loss = [&]() {
        const auto x = gather_rows(ds, batch.rows);
        const auto encoded = backbone_forward(model.backbone, x);
        TensorPtr mpn_logits, backbone_logits;
        if (cfg.loss.use_mpn_loss) {
            mpn_logits = classify(model.heads.mpn_w, model.heads.mpn_b,
                                  mpn_forward(cfg.mpn, model.layers, encoded));
        }
        if (cfg.loss.use_aux_loss) {
            backbone_logits =
                classify(model.heads.backbone_w, model.heads.backbone_b, encoded);
        }
        return combined_loss(cfg.loss, mpn_logits, backbone_logits, labels);
    };

    const auto report = grad_check(loss, all_param_list(model), h, tol);
    std::vector<GradCheckGroup> groups;
    for (const auto& g : report.groups) {
        const std::string label = group_label(g.name);
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const GradCheckGroup& x) { return x.name == label; });
        if (it == groups.end()) {
            groups.push_back({label, g.max_rel_err});
        } else {
            it->max_rel_err = std::max(it->max_rel_err, g.max_rel_err);
        }
    }
    return groups;
}

}  // namespace gembed
