#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "gembed/checkpoint.hpp"
#include "gembed/config.hpp"
#include "gembed/error.hpp"
#include "gembed/metrics.hpp"
#include "gembed/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gembed;

namespace {

constexpr double kGradCheckStep = 1e-5;
constexpr double kGradCheckTol = 1e-4;

struct CliArgs {
    std::string config_path;
    std::string checkpoint_path;
    std::string embeddings_path;
    std::string out_path;
    std::string side = "test";
    std::string mode;  // empty: use the config's inference_mode
    std::uint64_t seed = 0;
    bool seed_given = false;
};

RunConfig effective_config(const CliArgs& args) {
    RunConfig cfg = load_config(args.config_path);
    if (args.seed_given) cfg.seed = args.seed;
    return cfg;
}

SplitSide parse_side(const std::string& side) {
    if (side == "train") return SplitSide::train;
    if (side == "test") return SplitSide::test;
    throw ConfigError("--side must be 'train' or 'test', got '" + side + "'");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError("failed writing '" + path + "'");
}

/// Loads the model and cross-checks it against the config's geometry keys.
Model load_matching_model(const std::string& path, const RunConfig& cfg) {
    Model model = load_checkpoint(path);
    const auto mismatch = [&](const char* key, std::size_t got, std::size_t want) {
        throw ConfigError(std::string("config key '") + key + "': config says " +
                          std::to_string(want) + " but the checkpoint was built with " +
                          std::to_string(got));
    };
    if (model.cfg.d != cfg.mpn.d) mismatch("d", model.cfg.d, cfg.mpn.d);
    if (model.cfg.L != cfg.mpn.L) mismatch("mpn_steps", model.cfg.L, cfg.mpn.L);
    if (model.cfg.M != cfg.mpn.M) mismatch("heads", model.cfg.M, cfg.mpn.M);
    if (model.cfg.ff_dim() != cfg.mpn.ff_dim()) {
        mismatch("ff_dim", model.cfg.ff_dim(), cfg.mpn.ff_dim());
    }
    if (model.cfg.include_self != cfg.mpn.include_self ||
        model.cfg.scale_by_head_dim != cfg.mpn.scale_by_head_dim) {
        throw ConfigError("config keys 'include_self'/'scale_by_head_dim' disagree with the "
                          "checkpoint");
    }
    return model;
}

/// The dataset the run describes, with the model's expected input width
/// checked before any heavy work.
LabeledDataset dataset_for(const RunConfig& cfg, const Model& model) {
    LabeledDataset ds = load_or_generate(cfg);
    if (ds.input_dim() != model.input_dim) {
        throw DataError("dataset rows have " + std::to_string(ds.input_dim()) +
                        " features but the checkpoint encodes " +
                        std::to_string(model.input_dim));
    }
    return ds;
}

int cmd_train(const CliArgs& args) {
    RunConfig cfg = effective_config(args);
    if (!args.out_path.empty()) cfg.out_dir = args.out_path;
    const TrainResult result = train(cfg);
    fs::create_directories(cfg.out_dir);
    save_checkpoint(cfg.out_dir + "/checkpoint.bin", result.model);
    const std::string log = format_history(result.history);
    write_text(cfg.out_dir + "/train_log.txt", log);
    std::cout << log;
    return 0;
}

int cmd_embed(const CliArgs& args) {
    const RunConfig cfg = effective_config(args);
    const Model model = load_matching_model(args.checkpoint_path, cfg);
    const LabeledDataset ds = dataset_for(cfg, model);
    const SplitSpec split = zero_shot_split(ds, cfg.train_fraction);
    const std::string mode = args.mode.empty() ? cfg.inference_mode : args.mode;
    const RetrievalIndex index =
        embed_side(model, ds, split, parse_side(args.side), mode, cfg.batch_build());

    LabeledDataset out;
    out.features = index.embeddings;
    out.labels = index.labels;
    out.reindex();
    std::string path = args.out_path;
    if (path.empty()) {
        fs::create_directories(cfg.out_dir);
        path = cfg.out_dir + "/embeddings.txt";
    }
    write_dataset(path, out);
    return 0;
}

/// Embedding files hold finished (unit-norm) vectors; using them verbatim
/// keeps file-based evaluation bit-identical to the in-process path.
RetrievalIndex index_from_file(const std::string& path) {
    const LabeledDataset ds = load_dataset(path);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < ds.input_dim(); ++j) {
            sq += ds.features->at(i, j) * ds.features->at(i, j);
        }
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
            throw DataError("embedding file row " + std::to_string(i) +
                            " is not unit length; expected embed output");
        }
    }
    RetrievalIndex index;
    index.embeddings = ds.features;
    index.labels = ds.labels;
    return index;
}

int cmd_evaluate(const CliArgs& args) {
    const RunConfig cfg = effective_config(args);
    if (args.checkpoint_path.empty() == args.embeddings_path.empty()) {
        throw ConfigError("evaluate needs exactly one of --checkpoint or --embeddings");
    }

    RetrievalIndex index;
    if (!args.embeddings_path.empty()) {
        index = index_from_file(args.embeddings_path);
    } else {
        const Model model = load_matching_model(args.checkpoint_path, cfg);
        const LabeledDataset ds = dataset_for(cfg, model);
        const SplitSpec split = zero_shot_split(ds, cfg.train_fraction);
        const std::string mode = args.mode.empty() ? cfg.inference_mode : args.mode;
        index = embed_side(model, ds, split, parse_side(args.side), mode, cfg.batch_build());
    }

    std::size_t clusters = cfg.clusters;
    if (clusters == 0) {
        clusters = std::set<int>(index.labels.begin(), index.labels.end()).size();
    }
    Rng rng(cfg.seed + 3);  // the evaluation stream (see pipeline seed roles)
    const EvalReport report = evaluate(index, cfg.recall_ks, clusters, rng);
    const std::string text = format_report(report);
    std::string path = args.out_path;
    if (path.empty()) {
        fs::create_directories(cfg.out_dir);
        path = cfg.out_dir + "/report.txt";
    }
    write_text(path, text);
    std::cout << text;
    return 0;
}

int cmd_gradcheck(const CliArgs& args) {
    const RunConfig cfg = effective_config(args);
    const auto groups = gradcheck_model(cfg, kGradCheckStep, kGradCheckTol);
    bool ok = true;
    char line[160];
    for (const auto& g : groups) {
        const bool pass = g.max_rel_err <= kGradCheckTol;
        ok = ok && pass;
        std::snprintf(line, sizeof line, "group %-20s max_rel_err %.3e %s\n", g.name.c_str(),
                      g.max_rel_err, pass ? "PASS" : "FAIL");
        std::cout << line;
    }
    std::cout << "gradcheck " << (ok ? "PASS" : "FAIL") << " (" << groups.size()
              << " groups, tolerance " << kGradCheckTol << ")\n";
    return ok ? 0 : 4;
}

int cmd_make_blobs(const CliArgs& args) {
    const RunConfig cfg = effective_config(args);
    Rng rng(cfg.seed);
    const LabeledDataset ds = make_blobs(rng, cfg.blob_classes, cfg.blob_per_class, cfg.blob_dim,
                                         cfg.blob_center_scale, cfg.blob_noise);
    std::string path = args.out_path;
    if (path.empty()) {
        fs::create_directories(cfg.out_dir);
        path = cfg.out_dir + "/blobs.txt";
    }
    write_dataset(path, ds);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gembed: train, embed, and evaluate batch-graph retrieval models"};
    app.require_subcommand(1);

    CliArgs args;
    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "key=value run configuration")
            ->required();
        cmd->add_option("--seed", args.seed, "override the config's seed");
        return cmd;
    };

    auto* train_cmd = add_common(app.add_subcommand("train", "fit a model, write a checkpoint"));
    train_cmd->add_option("--out", args.out_path, "output directory (default: config out_dir)");

    auto* embed_cmd =
        add_common(app.add_subcommand("embed", "write one split side's embeddings"));
    embed_cmd->add_option("--checkpoint", args.checkpoint_path, "trained model")->required();
    embed_cmd->add_option("--out", args.out_path, "output file");
    embed_cmd->add_option("--side", args.side, "train or test (default test)");
    embed_cmd->add_option("--mode", args.mode, "backbone or mpn-reciprocal");

    auto* eval_cmd = add_common(app.add_subcommand("evaluate", "retrieval + clustering report"));
    eval_cmd->add_option("--checkpoint", args.checkpoint_path, "trained model");
    eval_cmd->add_option("--embeddings", args.embeddings_path, "embedding file from embed");
    eval_cmd->add_option("--out", args.out_path, "report file");
    eval_cmd->add_option("--side", args.side, "train or test (default test)");
    eval_cmd->add_option("--mode", args.mode, "backbone or mpn-reciprocal");

    auto* grad_cmd =
        add_common(app.add_subcommand("gradcheck", "audit gradients on one sampled batch"));

    auto* blobs_cmd =
        add_common(app.add_subcommand("make-blobs", "write a synthetic labeled dataset"));
    blobs_cmd->add_option("--out", args.out_path, "output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // flag misuse is a config-class failure
    }
    args.seed_given = app.get_subcommands().front()->count("--seed") > 0;

    try {
        if (app.got_subcommand(train_cmd)) return cmd_train(args);
        if (app.got_subcommand(embed_cmd)) return cmd_embed(args);
        if (app.got_subcommand(eval_cmd)) return cmd_evaluate(args);
        if (app.got_subcommand(grad_cmd)) return cmd_gradcheck(args);
        if (app.got_subcommand(blobs_cmd)) return cmd_make_blobs(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "config error (shape): " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
