#include "gembed/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gembed {

void LabeledDataset::reindex() {
    if (!features) throw DataError("dataset has no feature tensor");
    if (features->rows() != labels.size()) {
        throw DataError("dataset has " + std::to_string(features->rows()) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
    }
    class_index.clear();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) {
            throw DataError("row " + std::to_string(i) + " has negative label " +
                            std::to_string(labels[i]));
        }
        class_index[labels[i]].push_back(i);
    }
}

namespace {

[[noreturn]] void parse_error(const std::string& path, std::size_t line, const std::string& what) {
    throw DataError(path + ": line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> tokens_of(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

long parse_int(const std::string& tok, bool& ok) {
    const char* s = tok.c_str();
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    ok = end == s + tok.size() && !tok.empty();
    return v;
}

double parse_float(const std::string& tok, bool& ok) {
    const char* s = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    ok = end == s + tok.size() && !tok.empty();
    return v;
}

}  // namespace

LabeledDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || tokens_of(line).empty()) {
        parse_error(path, 1, "missing \"N D\" header");
    }
    const auto header = tokens_of(line);
    if (header.size() != 2) {
        parse_error(path, 1, "header must be \"N D\", got " + std::to_string(header.size()) +
                                 " tokens");
    }
    bool ok_n = false, ok_d = false;
    const long n = parse_int(header[0], ok_n);
    const long d = parse_int(header[1], ok_d);
    if (!ok_n || !ok_d || n <= 0 || d <= 0) {
        parse_error(path, 1, "header must contain two positive integers");
    }

    LabeledDataset ds;
    ds.labels.reserve(static_cast<std::size_t>(n));
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n * d));
    std::size_t lineno = 1;
    while (ds.labels.size() < static_cast<std::size_t>(n)) {
        if (!std::getline(in, line)) {
            parse_error(path, lineno + 1, "expected " + std::to_string(n) + " rows, file ends after " +
                                              std::to_string(ds.labels.size()));
        }
        ++lineno;
        const auto toks = tokens_of(line);
        if (toks.empty()) continue;  // tolerate blank lines
        if (toks.size() != static_cast<std::size_t>(d) + 1) {
            parse_error(path, lineno, "row has " + std::to_string(toks.size() - 1) +
                                          " values, expected " + std::to_string(d));
        }
        bool ok = false;
        const long label = parse_int(toks[0], ok);
        if (!ok) parse_error(path, lineno, "label \"" + toks[0] + "\" is not an integer");
        if (label < 0) parse_error(path, lineno, "label must be non-negative");
        ds.labels.push_back(static_cast<int>(label));
        for (long j = 0; j < d; ++j) {
            const double v = parse_float(toks[static_cast<std::size_t>(j) + 1], ok);
            if (!ok) {
                parse_error(path, lineno,
                            "value \"" + toks[static_cast<std::size_t>(j) + 1] + "\" is not a number");
            }
            values.push_back(v);
        }
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (!tokens_of(line).empty()) parse_error(path, lineno, "unexpected content after last row");
    }
    ds.features = Tensor::make({static_cast<std::size_t>(n), static_cast<std::size_t>(d)},
                               std::move(values));
    ds.reindex();
    return ds;
}

void write_dataset(const std::string& path, const LabeledDataset& ds) {
    if (!ds.features) throw DataError("dataset has no feature tensor");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    const std::size_t n = ds.features->rows(), d = ds.features->cols();
    out << n << ' ' << d << '\n';
    char buf[40];
    for (std::size_t i = 0; i < n; ++i) {
        out << ds.labels[i];
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.features->at(i, j));
            out << ' ' << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + path);
}

SplitSpec zero_shot_split(const LabeledDataset& ds, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("split fraction must lie strictly between 0 and 1");
    }
    if (ds.num_classes() < 2) {
        throw DataError("cannot split " + std::to_string(ds.num_classes()) + " class(es)");
    }
    std::vector<int> classes;  // std::map iterates ascending by id
    for (const auto& [label, rows] : ds.class_index) classes.push_back(label);
    const auto n_train = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(classes.size())));
    SplitSpec split;
    split.train_classes.assign(classes.begin(), classes.begin() + static_cast<long>(n_train));
    split.test_classes.assign(classes.begin() + static_cast<long>(n_train), classes.end());
    return split;
}

BatchSpec sample_batch(const LabeledDataset& ds, const SplitSpec& split, SplitSide side,
                       std::size_t n, std::size_t p, Rng& rng) {
    const auto& classes = side == SplitSide::train ? split.train_classes : split.test_classes;
    if (n == 0 || p == 0) throw ConfigError("batch needs n >= 1 and p >= 1");
    if (classes.size() < n) {
        throw ConfigError("batch wants " + std::to_string(n) + " classes but the split side has " +
                          std::to_string(classes.size()));
    }
    BatchSpec batch;
    batch.n = n;
    batch.p = p;
    for (std::size_t pos : rng.sample_without_replacement(classes.size(), n)) {
        const int label = classes[pos];
        const auto it = ds.class_index.find(label);
        if (it == ds.class_index.end() || it->second.empty()) {
            throw DataError("class " + std::to_string(label) + " has no rows");
        }
        const auto& rows = it->second;
        if (rows.size() >= p) {
            for (std::size_t r : rng.sample_without_replacement(rows.size(), p)) {
                batch.rows.push_back(rows[r]);
                batch.labels.push_back(label);
            }
        } else {
            // class smaller than p: fall back to sampling with replacement
            for (std::size_t k = 0; k < p; ++k) {
                batch.rows.push_back(rows[rng.below(rows.size())]);
                batch.labels.push_back(label);
            }
        }
    }
    return batch;
}

TensorPtr gather_rows(const LabeledDataset& ds, const std::vector<std::size_t>& rows) {
    const std::size_t d = ds.input_dim();
    auto out = Tensor::zeros({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= ds.size()) {
            throw DataError("row index " + std::to_string(rows[i]) + " out of range");
        }
        for (std::size_t j = 0; j < d; ++j) out->at(i, j) = ds.features->at(rows[i], j);
    }
    return out;
}

LabeledDataset make_blobs(Rng& rng, std::size_t num_classes, std::size_t per_class,
                          std::size_t input_dim, double center_scale, double noise_sigma) {
    if (num_classes == 0 || per_class == 0 || input_dim == 0) {
        throw ConfigError("make_blobs needs positive counts");
    }
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
    const std::size_t n = num_classes * per_class;
    std::vector<double> centers(num_classes * input_dim);
    for (double& v : centers) v = rng.uniform(-center_scale, center_scale);
    LabeledDataset ds;
    std::vector<double> values;
    values.reserve(n * input_dim);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) {
            for (std::size_t j = 0; j < input_dim; ++j) {
                values.push_back(centers[c * input_dim + j] + noise_sigma * rng.normal());
            }
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    ds.features = Tensor::make({n, input_dim}, std::move(values));
    ds.reindex();
    return ds;
}

}  // namespace gembed
