#include "gembed/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gembed/error.hpp"

namespace gembed {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
    throw ConfigError("config key '" + key + "': cannot read '" + value + "' as " + expected);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(value, &used);
    } catch (const std::exception&) {
        bad_value(key, value, "a non-negative integer");
    }
    if (used != value.size() || value[0] == '-' || value[0] == '+') {
        bad_value(key, value, "a non-negative integer");
    }
    return out;
}

double parse_f64(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        bad_value(key, value, "a number");
    }
    if (used != value.size() || !std::isfinite(out)) bad_value(key, value, "a finite number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "a boolean (true/false)");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_u64(key, trim(item)));
    }
    return out;
}

void require(bool ok, const std::string& key, const std::string& rule) {
    if (!ok) throw ConfigError("config key '" + key + "': " + rule);
}

}  // namespace

BatchBuildParams RunConfig::batch_build() const {
    BatchBuildParams params;
    params.k = knn_k;
    params.expansion_alpha = expansion_alpha;
    params.k_r = k_r == 0 ? batch_size() : k_r;
    return params;
}

void RunConfig::validate() const {
    if (dataset.empty()) {
        require(blob_classes >= 2, "blob_classes", "need at least 2 classes");
        require(blob_per_class >= 1, "blob_per_class", "must be positive");
        require(blob_dim >= 1, "blob_dim", "must be positive");
        require(blob_center_scale > 0.0, "blob_center_scale", "must be positive");
        require(blob_noise >= 0.0, "blob_noise", "must be non-negative");
    }
    require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction",
            "must lie strictly between 0 and 1");
    for (std::size_t w : hidden_dims) require(w >= 1, "hidden_dims", "widths must be positive");
    require(mpn.d >= 2, "d", "embedding width must be at least 2");
    require(mpn.M >= 1, "heads", "need at least one attention head");
    require(mpn.d % mpn.M == 0, "heads", "must divide the embedding width d");
    require(loss.temperature > 0.0, "temperature", "must be positive");
    require(loss.smoothing >= 0.0 && loss.smoothing < 1.0, "smoothing", "must lie in [0, 1)");
    require(loss.aux_weight >= 0.0, "aux_weight", "must be non-negative");
    require(loss.use_mpn_loss || loss.use_aux_loss, "use_mpn_loss",
            "at least one loss term must stay enabled");
    require(lr_mpn > 0.0, "lr_mpn", "must be positive");
    require(lr_backbone > 0.0, "lr_backbone", "must be positive");
    require(optim.beta1 >= 0.0 && optim.beta1 < 1.0, "beta1", "must lie in [0, 1)");
    require(optim.beta2 >= 0.0 && optim.beta2 < 1.0, "beta2", "must lie in [0, 1)");
    require(optim.eps > 0.0, "adam_eps", "must be positive");
    require(optim.weight_decay >= 0.0, "weight_decay", "must be non-negative");
    require(classes_per_batch >= 2, "classes_per_batch", "need at least 2 classes per batch");
    require(samples_per_class >= 1, "samples_per_class", "must be positive");
    require(inference_mode == "backbone" || inference_mode == "mpn-reciprocal", "inference_mode",
            "must be 'backbone' or 'mpn-reciprocal'");
    require(knn_k >= 2, "knn_k", "need at least 2 neighbors for reciprocity");
    require(expansion_alpha >= 0.0 && expansion_alpha <= 1.0, "expansion_alpha",
            "must lie in [0, 1]");
    require(!recall_ks.empty(), "recall_ks", "need at least one K");
    for (std::size_t k : recall_ks) require(k >= 1, "recall_ks", "every K must be positive");
    require(!out_dir.empty(), "out_dir", "must not be empty");
    mpn.validate();
    loss.validate();
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        if (!seen.insert(key).second) {
            throw ConfigError("config key '" + key + "' appears twice");
        }

        if (key == "seed") cfg.seed = parse_u64(key, value);
        else if (key == "dataset") cfg.dataset = value;
        else if (key == "blob_classes") cfg.blob_classes = parse_u64(key, value);
        else if (key == "blob_per_class") cfg.blob_per_class = parse_u64(key, value);
        else if (key == "blob_dim") cfg.blob_dim = parse_u64(key, value);
        else if (key == "blob_center_scale") cfg.blob_center_scale = parse_f64(key, value);
        else if (key == "blob_noise") cfg.blob_noise = parse_f64(key, value);
        else if (key == "train_fraction") cfg.train_fraction = parse_f64(key, value);
        else if (key == "hidden_dims") cfg.hidden_dims = parse_size_list(key, value);
        else if (key == "d") cfg.mpn.d = parse_u64(key, value);
        else if (key == "mpn_steps") cfg.mpn.L = parse_u64(key, value);
        else if (key == "heads") cfg.mpn.M = parse_u64(key, value);
        else if (key == "ff_dim") cfg.mpn.d_ff = parse_u64(key, value);
        else if (key == "include_self") cfg.mpn.include_self = parse_bool(key, value);
        else if (key == "scale_by_head_dim") cfg.mpn.scale_by_head_dim = parse_bool(key, value);
        else if (key == "temperature") cfg.loss.temperature = parse_f64(key, value);
        else if (key == "smoothing") cfg.loss.smoothing = parse_f64(key, value);
        else if (key == "aux_weight") cfg.loss.aux_weight = parse_f64(key, value);
        else if (key == "use_mpn_loss") cfg.loss.use_mpn_loss = parse_bool(key, value);
        else if (key == "use_aux_loss") cfg.loss.use_aux_loss = parse_bool(key, value);
        else if (key == "lr_mpn") cfg.lr_mpn = parse_f64(key, value);
        else if (key == "lr_backbone") cfg.lr_backbone = parse_f64(key, value);
        else if (key == "beta1") cfg.optim.beta1 = parse_f64(key, value);
        else if (key == "beta2") cfg.optim.beta2 = parse_f64(key, value);
        else if (key == "adam_eps") cfg.optim.eps = parse_f64(key, value);
        else if (key == "weight_decay") cfg.optim.weight_decay = parse_f64(key, value);
        else if (key == "classes_per_batch") cfg.classes_per_batch = parse_u64(key, value);
        else if (key == "samples_per_class") cfg.samples_per_class = parse_u64(key, value);
        else if (key == "epochs") cfg.epochs = parse_u64(key, value);
        else if (key == "inference_mode") cfg.inference_mode = value;
        else if (key == "knn_k") cfg.knn_k = parse_u64(key, value);
        else if (key == "expansion_alpha") cfg.expansion_alpha = parse_f64(key, value);
        else if (key == "k_r") cfg.k_r = parse_u64(key, value);
        else if (key == "recall_ks") cfg.recall_ks = parse_size_list(key, value);
        else if (key == "clusters") cfg.clusters = parse_u64(key, value);
        else if (key == "out_dir") cfg.out_dir = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

}  // namespace gembed
