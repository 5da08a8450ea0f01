#include "stric/cli.hpp"

#include "stric/checkpoint.hpp"
#include "stric/config.hpp"
#include "stric/error.hpp"
#include "stric/eval.hpp"
#include "stric/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

namespace stric::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::string data;
    std::string out;
    std::string checkpoint;
    std::string scores;
    std::string detections;
    std::string kind;
    std::optional<std::uint64_t> seed;
    std::size_t length = 0;
    double noise = 0.0;
    double magnitude = 0.0;
    bool force = false;
};

void guard_output(const fs::path& path, bool force) {
    if (fs::exists(path) && !force) {
        throw ConfigError("refusing to overwrite '" + path.string() + "' (pass --force)");
    }
}

fs::path prepare_dir(const std::string& dir, const std::vector<std::string>& files, bool force) {
    const fs::path root(dir);
    for (const auto& f : files) {
        guard_output(root / f, force);
    }
    fs::create_directories(root);
    return root;
}

void require(const std::string& value, const std::string& flag, const std::string& command) {
    if (value.empty()) {
        throw ConfigError(command + ": " + flag + " is required");
    }
}

config::RunConfig load_run_config(const Options& o) {
    config::RunConfig rc = o.config.empty() ? config::RunConfig{} : config::load_config(o.config);
    if (!o.data.empty()) {
        rc.data.path = o.data;
    }
    if (o.seed) {
        rc.train.seed = *o.seed;
    }
    rc.validate();
    return rc;
}

void cmd_synth(const Options& o, std::ostream& out) {
    require(o.kind, "--kind", "synth");
    require(o.out, "--out", "synth");
    const eval::SynthKind kind = eval::parse_synth_kind(o.kind);
    guard_output(o.out, o.force);
    const eval::LabeledSeries ls = eval::gen_synthetic(kind, {o.length, o.noise, o.magnitude}, o.seed.value_or(0));
    eval::save_labeled_csv(ls, o.out);
    out << "wrote " << ls.series.length() << " samples of " << eval::to_string(kind) << " to " << o.out << '\n';
}

void cmd_train(const Options& o, std::ostream& out) {
    require(o.out, "--out", "train");
    const config::RunConfig rc = load_run_config(o);
    require(rc.data.path, "--data (or data.path)", "train");
    const fs::path dir = prepare_dir(o.out, {"checkpoint.json", "history.csv"}, o.force);
    const series::TimeSeries raw = eval::load_labeled_csv(rc.data.path).series;
    const pipeline::TrainOutcome r = pipeline::train_model(rc, raw);
    checkpoint::save(r.checkpoint, (dir / "checkpoint.json").string());
    train::save_history_csv(r.result.history, (dir / "history.csv").string());
    out << "trained " << r.checkpoint.variant << " for " << r.result.history.size() << " epochs (best "
        << r.result.best_epoch << ", val rmse " << series::format_double(r.result.best_val_rmse) << ") -> "
        << dir.string() << '\n';
}

void cmd_decompose(const Options& o, std::ostream& out) {
    require(o.checkpoint, "--checkpoint", "decompose");
    require(o.data, "--data", "decompose");
    require(o.out, "--out", "decompose");
    guard_output(o.out, o.force);
    const checkpoint::Checkpoint ckpt = checkpoint::load(o.checkpoint);
    const series::TimeSeries raw = eval::load_labeled_csv(o.data).series;
    const Eigen::MatrixXd z = series::apply_standardize(raw, ckpt.stats).values;
    const pipeline::DecompositionTable table =
        pipeline::to_raw_units(pipeline::decompose_series(ckpt.model, z), ckpt.stats);
    pipeline::save_decomposition_csv(table, raw.channel_names, o.out);
    out << "wrote decomposition of " << raw.length() << " samples to " << o.out << '\n';
}

void cmd_detect(const Options& o, std::ostream& out) {
    require(o.data, "--data", "detect");
    require(o.out, "--out", "detect");
    const config::RunConfig rc = load_run_config(o);
    const fs::path dir = prepare_dir(o.out, {"scores.csv", "detections.json"}, o.force);
    std::optional<checkpoint::Checkpoint> ckpt;
    if (!o.checkpoint.empty()) {
        ckpt = checkpoint::load(o.checkpoint);
    }
    const series::TimeSeries raw = eval::load_labeled_csv(o.data).series;
    const detector::CusumResult r = pipeline::detect(ckpt, raw, rc.detector);
    detector::save_scores_csv(r, (dir / "scores.csv").string());
    detector::save_detections_json(r.detections, (dir / "detections.json").string());
    out << r.detections.size() << " detection(s)";
    for (const auto& d : r.detections) {
        out << " [change " << d.changepoint_estimate << ", stop " << d.stop_time << "]";
    }
    out << " -> " << dir.string() << '\n';
}

void evaluate_detections(const Options& o, std::ostream& out, std::ostream& err) {
    require(o.detections, "--detections", "evaluate");
    require(o.data, "--data", "evaluate");
    guard_output(o.out, o.force);
    bool has_labels = false;
    const eval::LabeledSeries ls = eval::load_labeled_csv(o.data, &has_labels);
    const std::size_t T = ls.series.length();
    const auto steps = detector::load_scores_csv(o.scores);
    if (steps.size() != T) {
        throw DataError("scores cover " + std::to_string(steps.size()) + " samples but the data has " +
                        std::to_string(T));
    }
    const auto detections = detector::load_detections_json(o.detections);
    const std::vector<int> flags = eval::flags_from_detections(detections, T);

    nlohmann::json metrics = {{"samples", T}, {"detections", detections.size()}};
    std::vector<std::string> notes;
    if (!has_labels) {
        notes.push_back("no label column in the data: F1 and AUC omitted");
    } else {
        metrics["f1"] = eval::f1(flags, ls.labels);
        std::vector<double> scores;
        for (const auto& s : steps) {
            scores.push_back(s.score);
        }
        try {
            metrics["auc"] = eval::roc_auc(scores, ls.labels);
        } catch (const DataError& e) {
            notes.push_back(std::string("AUC omitted: ") + e.what());
        }
    }
    if (!notes.empty()) {
        metrics["notes"] = notes;
        for (const auto& n : notes) {
            err << "note: " << n << '\n';
        }
    }
    std::ofstream f(o.out);
    if (!f) {
        throw DataError("cannot write metrics to " + o.out);
    }
    f << metrics.dump(2) << '\n';
    out << metrics.dump() << '\n';
}

void evaluate_ablation(const Options& o, std::ostream& out) {
    const config::RunConfig rc = load_run_config(o);
    require(rc.data.path, "--data (or data.path)", "evaluate");
    guard_output(o.out, o.force);
    const series::TimeSeries raw = eval::load_labeled_csv(rc.data.path).series;
    eval::ExperimentConfig ec;
    ec.model = rc.model;
    ec.train = rc.train;
    ec.train_frac = rc.data.train_frac;
    ec.val_frac = rc.data.val_frac;
    const std::vector<Variant> variants = {Variant::kTcn, Variant::kTcnLinear, Variant::kTcnFading, Variant::kStric};
    const auto rows =
        eval::ablation_run(fs::path(rc.data.path).stem().string(), raw, variants, ec, rc.train.seed);
    eval::save_ablation_csv(rows, o.out);
    for (const auto& r : rows) {
        out << to_string(r.variant) << ": test rmse " << series::format_double(r.report.test_rmse) << ", gap "
            << series::format_double(r.report.gap) << '\n';
    }
}

void cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
    require(o.out, "--out", "evaluate");
    if (!o.scores.empty()) {
        evaluate_detections(o, out, err);
    } else {
        evaluate_ablation(o, out);
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Structured time-series forecasting and change detection"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&o](CLI::App* sub) {
        sub->add_option("--out", o.out, "Output file or directory");
        sub->add_flag("--force", o.force, "Overwrite existing outputs");
    };
    CLI::App* synth = app.add_subcommand("synth", "Generate a labeled synthetic series");
    synth->add_option("--kind", o.kind, "changepoint, point_outlier, mixed, trend_plus_sine, ar1, ma2, pure_noise");
    synth->add_option("--seed", o.seed, "Random seed");
    synth->add_option("--length", o.length, "Samples (0: kind default)");
    synth->add_option("--noise", o.noise, "Noise std (0: kind default)");
    synth->add_option("--magnitude", o.magnitude, "Anomaly or trend magnitude (0: kind default)");
    common(synth);

    CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
    train_cmd->add_option("--config", o.config, "Run config (JSON)");
    train_cmd->add_option("--data", o.data, "Input CSV (overrides data.path)");
    train_cmd->add_option("--seed", o.seed, "Overrides train.seed");
    common(train_cmd);

    CLI::App* decompose = app.add_subcommand("decompose", "Export the per-sample decomposition");
    decompose->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train");
    decompose->add_option("--data", o.data, "Input CSV");
    common(decompose);

    CLI::App* detect = app.add_subcommand("detect", "Score a series and report change points");
    detect->add_option("--checkpoint", o.checkpoint, "Checkpoint; without one the data itself is scored");
    detect->add_option("--data", o.data, "Input CSV");
    detect->add_option("--config", o.config, "Run config (detector section)");
    common(detect);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Detection metrics or an ablation table");
    evaluate->add_option("--scores", o.scores, "scores.csv from detect");
    evaluate->add_option("--detections", o.detections, "detections.json from detect");
    evaluate->add_option("--data", o.data, "Labeled CSV, or the series for an ablation run");
    evaluate->add_option("--config", o.config, "Run config for an ablation run");
    evaluate->add_option("--seed", o.seed, "Overrides train.seed");
    common(evaluate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            cmd_synth(o, out);
        } else if (train_cmd->parsed()) {
            cmd_train(o, out);
        } else if (decompose->parsed()) {
            cmd_decompose(o, out);
        } else if (detect->parsed()) {
            cmd_detect(o, out);
        } else if (evaluate->parsed()) {
            cmd_evaluate(o, out, err);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitOk;
}

} // namespace stric::cli
