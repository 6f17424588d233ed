#include "cli.hpp"

#include <debias/checkpoint.hpp>
#include <debias/config.hpp>
#include <debias/data.hpp>
#include <debias/error.hpp>
#include <debias/explain.hpp>
#include <debias/fairness.hpp>
#include <debias/image.hpp>
#include <debias/training.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace debias::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kTestSplitStream = 0x74657374;  // "test"
constexpr const char* kCheckpointName = "ckpt";
constexpr const char* kHistoryName = "history.csv";
constexpr const char* kConfigName = "config.json";
constexpr const char* kLabelsName = "labels.json";

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string config;
};

void add_common(CLI::App* cmd, CommonOptions& common) {
    cmd->add_option("--seed", common.seed, "Seed overriding the config");
    cmd->add_option("--out", common.out, "Output directory");
    cmd->add_option("--config", common.config, "JSON config file");
}

std::string format(const char* fmt, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, value);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot write " + path.string());
    }
    f << text;
    if (!f) {
        throw Error("failed writing " + path.string());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path require_out(const std::string& out, const fs::path& fallback = {}) {
    fs::path dir = out.empty() ? fallback : fs::path(out);
    if (dir.empty()) {
        throw Error("an output directory is required (--out or output_dir)");
    }
    fs::create_directories(dir);
    return dir;
}

SynthConfig default_synth_config() {
    SynthConfig cfg;
    for (const char* race : {"a", "b"}) {
        for (const char* gender : {"f", "m"}) {
            cfg.groups.push_back({race, gender, 100, 0.3, 0.1});
        }
    }
    return cfg;
}

int synth(const CommonOptions& common, std::ostream& out) {
    SynthConfig cfg = common.config.empty() ? default_synth_config() : load_synth_config(common.config);
    if (common.seed) {
        cfg.seed = *common.seed;
    }
    const fs::path dir = require_out(common.out);
    const Manifest all = generate_synthetic(cfg);
    Rng split_rng = Rng(cfg.seed).fork(kTestSplitStream);
    auto [train, test] = stratified_split(all, cfg.test_fraction, split_rng);
    write_dataset(all, dir, "manifest.csv");
    write_manifest(train, dir / "train.csv");
    write_manifest(test, dir / "test.csv");
    write_text(dir / "synth.json", synth_config_to_json(cfg) + "\n");
    out << "wrote " << all.size() << " samples (" << train.size() << " train, " << test.size() << " test) to "
        << dir.string() << "\n";
    return kExitOk;
}

struct TrainOptions {
    bool resume = false;
    bool force = false;
    std::optional<std::size_t> epochs;
};

int train(const CommonOptions& common, const TrainOptions& opts, std::ostream& out) {
    if (common.config.empty()) {
        throw Error("train requires --config");
    }
    RunConfig cfg = load_run_config(common.config);
    if (common.seed) {
        cfg.seed = *common.seed;
    }
    if (opts.epochs) {
        cfg.epochs = *opts.epochs;
    }
    const fs::path dir = require_out(common.out, cfg.output_dir);
    cfg.output_dir = dir;
    cfg.validate();

    auto [train_set, val_set] = load_training_sets(cfg);

    TrainingSession session;
    const fs::path ckpt_path = dir / kCheckpointName;
    if (opts.resume) {
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        const std::string expected = config_hash(cfg);
        if (ckpt.config_hash != expected && !opts.force) {
            throw Error("config hash mismatch: checkpoint " + ckpt.config_hash + ", config " + expected +
                        " (pass --force to resume anyway)");
        }
        session = resume_training(cfg, std::move(ckpt));
    } else {
        session = start_training(cfg);
    }

    // The saved copy lives in the run directory, so its paths must not be
    // relative to wherever train was invoked from.
    RunConfig saved = cfg;
    for (fs::path* p : {&saved.data.train, &saved.data.val, &saved.data.image_root, &saved.output_dir}) {
        if (!p->empty()) {
            *p = fs::absolute(*p).lexically_normal();
        }
    }
    write_text(dir / kConfigName, run_config_to_json(saved) + "\n");
    write_text(dir / kLabelsName,
               json{{"race", train_set.manifest.race_vocab}, {"gender", train_set.manifest.gender_vocab}}.dump(2) +
                   "\n");

    while (static_cast<std::size_t>(session.epoch) < cfg.epochs) {
        const HistoryRow row = run_epoch(session, train_set, val_set);
        out << "epoch " << row.epoch << "  loss " << format("%.4f", row.train_loss) << "  train_acc "
            << format("%.2f", row.train_acc) << "  val_loss " << format("%.4f", row.val_loss) << "  val_acc "
            << format("%.2f", row.val_acc) << "  lr " << format("%g", row.lr) << "\n";
        save_checkpoint(session.checkpoint(), ckpt_path);
        write_history_csv(session.history, dir / kHistoryName);
    }
    return kExitOk;
}

/// Run config for commands that consume a trained checkpoint: --config if
/// given, else the config.json saved next to the checkpoint, else defaults.
RunConfig config_for_checkpoint(const CommonOptions& common, const fs::path& ckpt_path, const Checkpoint& ckpt) {
    RunConfig cfg;
    const fs::path saved = ckpt_path.parent_path() / kConfigName;
    if (!common.config.empty()) {
        cfg = load_run_config(common.config);
    } else if (fs::exists(saved)) {
        cfg = load_run_config(saved);
    }
    cfg.model = ckpt.state.config;
    if (common.seed) {
        cfg.seed = *common.seed;
    }
    return cfg;
}

std::optional<Vocabularies> saved_vocabularies(const fs::path& ckpt_path) {
    const fs::path path = ckpt_path.parent_path() / kLabelsName;
    if (!fs::exists(path)) {
        return std::nullopt;
    }
    try {
        const json j = json::parse(read_text(path));
        return Vocabularies{j.at("race").get<std::vector<std::string>>(),
                            j.at("gender").get<std::vector<std::string>>()};
    } catch (const json::exception& e) {
        throw Error("malformed " + path.string() + ": " + e.what());
    }
}

PreparedSet load_eval_set(const fs::path& manifest_path, const std::string& image_root, const fs::path& ckpt_path,
                          const RunConfig& cfg) {
    const fs::path root = image_root.empty() ? manifest_path.parent_path() : fs::path(image_root);
    Manifest manifest = load_manifest(manifest_path, root, saved_vocabularies(ckpt_path));
    return prepare_set(manifest, cfg);
}

struct EvalOptions {
    std::string checkpoint;
    std::string manifest;
    std::string image_root;
    std::string group_by;
};

int evaluate(const CommonOptions& common, const EvalOptions& opts, std::ostream& out) {
    const fs::path ckpt_path = opts.checkpoint;
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg = config_for_checkpoint(common, ckpt_path, ckpt);
    if (!opts.group_by.empty()) {
        cfg.loss.grouping = parse_grouping(opts.group_by);
    }
    const fs::path dir = require_out(common.out, ckpt_path.parent_path());
    const PreparedSet set = load_eval_set(opts.manifest, opts.image_root, ckpt_path, cfg);
    const EvalResult result = evaluate_set(ckpt.state, set, cfg.loss, cfg.optimizer.batch_size);
    const FairnessReport report = make_report(result.log);
    write_predictions(result.log, dir / "predictions.csv");
    write_report(report, dir / "fairness.json");

    for (const auto& [group, acc] : report.groups) {
        out << group << "  " << format("%.2f", acc) << "  (n=" << report.counts.at(group) << ")\n";
    }
    out << "DoB " << format("%.2f", report.dob) << "  Max/Min " << format("%.3f", report.max_min) << "  macro "
        << format("%.2f", report.macro_overall) << "  micro " << format("%.2f", report.micro_overall) << "\n";
    return kExitOk;
}

int report(const CommonOptions& common, const std::vector<std::string>& inputs, std::ostream& out) {
    if (inputs.empty()) {
        throw Error("report needs at least one --input");
    }
    std::vector<std::pair<std::string, FairnessReport>> reports;
    for (const auto& input : inputs) {
        std::string name;
        fs::path path;
        const auto eq = input.find('=');
        if (eq == std::string::npos) {
            path = input;
            name = path.parent_path().filename().string();
            if (name.empty()) {
                name = path.stem().string();
            }
        } else {
            name = input.substr(0, eq);
            path = input.substr(eq + 1);
        }
        reports.emplace_back(name, read_report(path));
    }
    const fs::path dir = require_out(common.out);
    const auto rows = bias_accuracy_curve(reports);
    const std::string csv = format_curve_csv(rows);
    write_text(dir / "bias_accuracy.csv", csv);
    out << csv;
    return kExitOk;
}

struct GradcamOptions {
    std::string checkpoint;
    std::string manifest;
    std::string image_root;
    std::optional<std::size_t> target_class;
    std::size_t limit = 8;
    std::vector<std::string> ids;
};

int gradcam(const CommonOptions& common, const GradcamOptions& opts, std::ostream& out) {
    const fs::path ckpt_path = opts.checkpoint;
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const RunConfig cfg = config_for_checkpoint(common, ckpt_path, ckpt);
    const fs::path dir = require_out(common.out, ckpt_path.parent_path() / "gradcam");
    const PreparedSet set = load_eval_set(opts.manifest, opts.image_root, ckpt_path, cfg);

    std::size_t written = 0;
    for (std::size_t i = 0; i < set.images.size() && written < opts.limit; ++i) {
        const auto& id = set.manifest.samples[i].id;
        if (!opts.ids.empty() && std::find(opts.ids.begin(), opts.ids.end(), id) == opts.ids.end()) {
            continue;
        }
        std::size_t cls = 0;
        if (opts.target_class) {
            cls = *opts.target_class;
        } else {
            const Tensor logits = forward_sample(ckpt.state, set.images[i]).logits;
            cls = static_cast<std::size_t>(std::max_element(logits.values().begin(), logits.values().end()) -
                                           logits.values().begin());
        }
        write_heatmap(grad_cam(ckpt.state, set.images[i], cls, id), dir, id + "_gradcam");
        if (ckpt.state.config.attention) {
            write_pnm(dir / (id + "_mask.pgm"), attention_maps(ckpt.state, set.images[i]).spatial_mask);
        }
        ++written;
    }
    if (written == 0) {
        throw Error("no samples matched; nothing written");
    }
    out << "wrote " << written << " heatmaps to " << dir.string() << "\n";
    return kExitOk;
}

} // namespace

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fairness-aware attribute classifier: training and bias auditing", "debias"};
    app.require_subcommand(1);

    CommonOptions common;

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic biased dataset (CSV + PGM)");
    add_common(synth_cmd, common);

    TrainOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "Train a model; writes ckpt and history.csv");
    add_common(train_cmd, common);
    train_cmd->add_flag("--resume", train_opts.resume, "Continue from <out>/ckpt");
    train_cmd->add_flag("--force", train_opts.force, "Resume even if the config hash differs");
    train_cmd->add_option("--epochs", train_opts.epochs, "Total epochs, overriding the config");

    EvalOptions eval_opts;
    auto* eval_cmd = app.add_subcommand("evaluate", "Predict a manifest; writes predictions.csv and fairness.json");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--manifest", eval_opts.manifest, "Manifest CSV to evaluate")->required();
    eval_cmd->add_option("--image-root", eval_opts.image_root, "Image directory (default: manifest directory)");
    eval_cmd->add_option("--group-by", eval_opts.group_by, "race or race_gender (default: from config)");

    std::vector<std::string> report_inputs;
    auto* report_cmd = app.add_subcommand("report", "Merge fairness reports into bias_accuracy.csv");
    add_common(report_cmd, common);
    report_cmd->add_option("--input", report_inputs, "fairness.json, optionally as NAME=PATH")->required();

    GradcamOptions cam_opts;
    auto* cam_cmd = app.add_subcommand("gradcam", "Write Grad-CAM heatmaps and attention masks");
    add_common(cam_cmd, common);
    cam_cmd->add_option("--checkpoint", cam_opts.checkpoint, "Checkpoint file")->required();
    cam_cmd->add_option("--manifest", cam_opts.manifest, "Manifest CSV")->required();
    cam_cmd->add_option("--image-root", cam_opts.image_root, "Image directory (default: manifest directory)");
    cam_cmd->add_option("--class", cam_opts.target_class, "Target class (default: predicted class)");
    cam_cmd->add_option("--limit", cam_opts.limit, "Maximum number of samples");
    cam_cmd->add_option("--id", cam_opts.ids, "Restrict to these sample ids");

    try {
        std::vector<std::string> reversed(argv.rbegin(), argv.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) {
            return synth(common, out);
        }
        if (train_cmd->parsed()) {
            return train(common, train_opts, out);
        }
        if (eval_cmd->parsed()) {
            return evaluate(common, eval_opts, out);
        }
        if (report_cmd->parsed()) {
            return report(common, report_inputs, out);
        }
        return gradcam(common, cam_opts, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

} // namespace debias::cli
