#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "multitrans/errors.hpp"
#include "multitrans/eval.hpp"
#include "multitrans/io.hpp"

namespace fs = std::filesystem;
using namespace multitrans;

namespace {

// Bad configuration files count as usage errors, like bad flags.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string data;
    std::string variant;
    std::string fusion;
    std::optional<std::size_t> epochs;
    std::string clip;
    std::vector<std::string> variants;
};

RunConfig resolve_config(const Options& o) {
    RunConfig cfg;
    if (!o.config.empty()) {
        try {
            cfg = load_run_config(o.config);
        } catch (const ContractError& e) {
            throw UsageError(std::string("bad config '") + o.config + "': " + e.what());
        } catch (const IoError& e) {
            throw UsageError(e.what());
        }
    }
    if (o.seed) {
        cfg.generator.seed = *o.seed;
        cfg.training.seed = *o.seed;
    }
    if (o.epochs) cfg.training.epochs = *o.epochs;
    if (!o.variant.empty()) {
        try {
            if (o.variant.size() == 3 && o.variant[1] == '-') {
                const AblationVariant v = ablation_variant(o.variant);
                cfg.model.variant = v.variant;
                cfg.model.fusion = v.fusion;
            } else {
                cfg.model.variant = variant_from_string(o.variant);
            }
            if (!o.fusion.empty()) cfg.model.fusion = fusion_from_string(o.fusion);
        } catch (const ContractError& e) {
            throw UsageError(e.what());
        }
    } else if (!o.fusion.empty()) {
        try {
            cfg.model.fusion = fusion_from_string(o.fusion);
        } catch (const ContractError& e) {
            throw UsageError(e.what());
        }
    }
    return cfg;
}

Dataset obtain_data(const Options& o, const RunConfig& cfg) {
    return o.data.empty() ? generate_dataset(cfg.generator) : load_dataset(o.data);
}

void check_shapes(const ModelConfig& m, const Dataset& data) {
    const FeatureClip& c = data.train.empty() ? data.test.at(0) : data.train.front();
    if (c.sensors != m.num_sensors || c.input_dim != m.input_dim || c.weak_label.size() != m.num_classes) {
        throw ContractError("model config (S=" + std::to_string(m.num_sensors) + ", input_dim=" +
                            std::to_string(m.input_dim) + ", C=" + std::to_string(m.num_classes) +
                            ") does not match the data (S=" + std::to_string(c.sensors) + ", input_dim=" +
                            std::to_string(c.input_dim) + ", C=" + std::to_string(c.weak_label.size()) + ")");
    }
}

void print_report(const EvalReport& r) {
    for (std::size_t c = 0; c < r.per_class_ap.size(); ++c) {
        const auto& ap = r.per_class_ap[c];
        std::printf("class %zu  AP %s\n", c, ap ? format_sig6(*ap).c_str() : "excluded (no positives)");
    }
    std::printf("mAP %s over %zu frames\n", format_sig6(r.map).c_str(), r.num_frames);
}

int cmd_generate(const Options& o) {
    const RunConfig cfg = resolve_config(o);
    const Dataset data = generate_dataset(cfg.generator);
    save_dataset(o.out, data, cfg.generator);
    std::printf("wrote %zu train and %zu test clips to %s\n", data.train.size(), data.test.size(), o.out.c_str());
    return 0;
}

int cmd_train(const Options& o) {
    RunConfig cfg = resolve_config(o);
    const Dataset data = obtain_data(o, cfg);
    check_shapes(cfg.model, data);
    const fs::path out(o.out);
    TrainHooks hooks;
    hooks.on_epoch = [](const EpochRecord& r) {
        std::printf("epoch %zu  lr %s  loss %s\n", r.epoch, format_sig6(r.lr).c_str(), format_sig6(r.mean_loss).c_str());
        std::fflush(stdout);
    };
    hooks.on_checkpoint = [&](std::size_t finished, const ModelParams& params) {
        Checkpoint c{ModelKind::Network, cfg.model, params.clone()};
        save_checkpoint(out / ("checkpoint-epoch" + std::to_string(finished) + ".json"), c);
    };
    TrainResult result = train(data.train, data.event_counts, cfg.model, cfg.training, hooks);
    const Checkpoint ckpt{ModelKind::Network, cfg.model, std::move(result.params)};
    save_checkpoint(out / "checkpoint.json", ckpt);
    write_text(out / "loss.csv", loss_csv(result.history));
    save_run_config(out / "config.json", cfg);
    std::printf("checkpoint %s written to %s\n", ckpt.id().c_str(), (out / "checkpoint.json").c_str());
    return 0;
}

int cmd_eval(const Options& o) {
    const RunConfig cfg = resolve_config(o);
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const Dataset data = obtain_data(o, cfg);
    check_shapes(ckpt.config, data);
    const EvalReport report = evaluate(ckpt, data.test);
    const fs::path out(o.out);
    write_text(out / "report.json", report_to_json(report));
    write_text(out / "metrics.csv", metrics_csv(report));
    print_report(report);
    return 0;
}

int cmd_ablate(const Options& o) {
    const RunConfig cfg = resolve_config(o);
    const Dataset data = obtain_data(o, cfg);
    check_shapes(cfg.model, data);
    const auto names = o.variants.empty() ? ablation_names() : o.variants;
    for (const auto& n : names) {
        try {
            ablation_variant(n);
        } catch (const ContractError& e) {
            throw UsageError(e.what());
        }
    }
    std::vector<AblationRow> rows;
    for (const auto& n : names) {
        const std::vector<std::string> one{n};
        auto r = run_ablation(data, cfg.model, cfg.training, one);
        std::printf("%-4s mAP %s\n", n.c_str(), format_sig6(r[0].report.map).c_str());
        std::fflush(stdout);
        rows.push_back(std::move(r[0]));
    }
    const std::string table = ablation_csv(rows);
    write_text(fs::path(o.out) / "ablation.csv", table);
    std::printf("\n%s", table.c_str());
    return 0;
}

int cmd_attention(const Options& o) {
    const RunConfig cfg = resolve_config(o);
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const Dataset data = obtain_data(o, cfg);
    check_shapes(ckpt.config, data);
    const FeatureClip* clip = nullptr;
    for (const auto* split : {&data.test, &data.train}) {
        for (const auto& c : *split) {
            if (!clip && (o.clip.empty() || c.clip_id == o.clip)) clip = &c;
        }
    }
    if (!clip) throw ContractError("no clip named '" + o.clip + "'");
    const auto rows = dump_attention(ckpt, *clip);
    const fs::path out(o.out);
    write_text(out / "attention.csv", attention_csv(rows));
    std::printf("wrote %zu attention rows for %s\n", rows.size(), clip->clip_id.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-sensor event detection with self-attention fusion"};
    app.require_subcommand(1);
    Options o;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Run config JSON (generator, model, training)")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Seed for data generation and training");
    };
    auto add_data = [&](CLI::App* sub) {
        sub->add_option("--data", o.data, "Dataset directory; generated from the config when omitted")
            ->check(CLI::ExistingDirectory);
    };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--variant", o.variant, "baseline, multitrans, or an ablation row name such as C-3");
        sub->add_option("--fusion", o.fusion, "sum, max or concat")
            ->check(CLI::IsMember({"sum", "max", "concat"}));
        sub->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
    };

    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset directory");
    add_config(gen);
    gen->add_option("--out", o.out, "Output directory")->required();

    auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint.json and loss.csv");
    add_config(tr);
    add_data(tr);
    add_model(tr);
    tr->add_option("--out", o.out, "Output directory")->required();

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; writes report.json and metrics.csv");
    add_config(ev);
    add_data(ev);
    ev->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", o.out, "Output directory")->required();

    auto* ab = app.add_subcommand("ablate", "Train and evaluate the A-1..A-3 and C-1..C-3 variants");
    add_config(ab);
    add_data(ab);
    ab->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
    ab->add_option("--variants", o.variants, "Subset of rows to run (default all six)");
    ab->add_option("--out", o.out, "Output directory")->required();

    auto* at = app.add_subcommand("attention", "Dump attention weights of one clip to attention.csv");
    add_config(at);
    add_data(at);
    at->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    at->add_option("--clip", o.clip, "Clip id (default: first test clip)");
    at->add_option("--out", o.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(o);
        if (tr->parsed()) return cmd_train(o);
        if (ev->parsed()) return cmd_eval(o);
        if (ab->parsed()) return cmd_ablate(o);
        if (at->parsed()) return cmd_attention(o);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
