// mebm: speech-activity decoding pipeline for MEG-like recordings.
//
// Subcommands: synth, train, sweep, infer, eval, info. All options are
// flat key=value pairs, layered defaults < --config file < flags.
// Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numeric error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mebm/cli_config.hpp"
#include "mebm/eval.hpp"
#include "mebm/pipeline.hpp"
#include "mebm/synth.hpp"

namespace fs = std::filesystem;
using namespace mebm;

namespace {

void ensure_out_dir(const std::string& out) {
    if (out.empty()) throw ConfigError("output directory 'out' must be set");
    if (!fs::exists(out)) throw IoError("output directory does not exist: " + out);
    if (!fs::is_directory(out)) throw IoError("not a directory: " + out);
}

std::string out_path(const cli::RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.get("out")) / name).string();
}

std::string require_path(const cli::RunConfig& cfg, const std::string& key) {
    const std::string& value = cfg.get(key);
    if (value.empty()) throw ConfigError("required key '" + key + "' is not set");
    return value;
}

int cmd_synth(const cli::RunConfig& cfg) {
    ensure_out_dir(cfg.get("out"));
    const auto [rec, events] = generate_session(cfg.synth_config());
    save_recording(rec, out_path(cfg, "session.megr"));
    save_events(events, out_path(cfg, "session.events"));

    const auto labels = rasterize_labels(events, rec.sample_rate_hz, rec.n_samples());
    size_t speech_frames = 0;
    for (auto v : labels.values) speech_frames += v;
    std::printf("channels=%zu samples=%zu rate_hz=%.3f intervals=%zu speech_fraction=%.4f\n",
                rec.n_channels(), rec.n_samples(), rec.sample_rate_hz, events.intervals.size(),
                static_cast<double>(speech_frames) / static_cast<double>(labels.size()));
    return 0;
}

int cmd_train(const cli::RunConfig& cfg) {
    ensure_out_dir(cfg.get("out"));
    const auto wcfg = cfg.windowing_config();
    const auto mcfg = cfg.model_config();

    const Recording train_rec =
        preprocess_session(load_recording(require_path(cfg, "rec")), wcfg.frame_rate_hz);
    const EventTrack train_events = load_events(require_path(cfg, "events"));
    const Recording val_rec =
        preprocess_session(load_recording(require_path(cfg, "val_rec")), wcfg.frame_rate_hz);
    const EventTrack val_events = load_events(require_path(cfg, "val_events"));

    const TrainingSet train_set = make_training_set(train_rec, train_events, wcfg, "train");
    const auto val_windows = windowed_session(val_rec, val_events, wcfg, "val");

    std::vector<EpochLog> log;
    const CheckpointStore store = train(train_set, val_windows, mcfg, cfg.train_config(), &log);

    std::ofstream log_out(out_path(cfg, "train_log.tsv"));
    if (!log_out) throw IoError("cannot write training log");
    char buf[96];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%u\t%.12g\t%.12g\n", e.epoch, e.train_loss,
                      e.validation_loss);
        log_out << buf;
        std::printf("epoch=%u train_loss=%.6f val_loss=%.6f\n", e.epoch, e.train_loss,
                    e.validation_loss);
    }
    std::printf("checkpoints_kept=%zu store=%s\n", store.entries.size(),
                out_path(cfg, "store.tsv").c_str());
    return 0;
}

EvalSession load_eval_session(const cli::RunConfig& cfg, const WindowingConfig& wcfg) {
    const Recording rec =
        preprocess_session(load_recording(require_path(cfg, "val_rec")), wcfg.frame_rate_hz);
    const EventTrack events = load_events(require_path(cfg, "val_events"));
    return make_eval_session(rec, events, wcfg, "val");
}

int cmd_sweep(const cli::RunConfig& cfg) {
    ensure_out_dir(cfg.get("out"));
    const std::string store_path =
        cfg.get("store").empty() ? out_path(cfg, "store.tsv") : cfg.get("store");
    const CheckpointStore store = load_store_tsv(store_path);
    if (store.entries.empty()) throw ConfigError("checkpoint store is empty: " + store_path);

    const auto wcfg = cfg.windowing_config();
    const EvalSession val = load_eval_session(cfg, wcfg);

    char buf[64];
    for (const auto& entry : store.entries) {
        const Checkpoint ckpt = load_checkpoint(entry.path);
        const auto trace = predict_session(ckpt.params, ckpt.cfg, val.windows, val.n_frames);
        std::ofstream table(out_path(cfg, "sweep_epoch_" + std::to_string(entry.epoch) + ".tsv"));
        if (!table) throw IoError("cannot write sweep table");
        for (const auto& [tau, f1] : sweep_thresholds(trace, val.truth)) {
            std::snprintf(buf, sizeof(buf), "%.2f\t%.6f\n", tau, f1);
            table << buf;
        }
    }

    const Selection sel = select_best(store, val);
    // Report the checkpoint by name when it lives in the output directory,
    // keeping reruns byte-identical across run directories.
    const fs::path sel_path(sel.checkpoint_path);
    const std::string sel_name = sel_path.parent_path() == fs::path(cfg.get("out"))
                                     ? sel_path.filename().string()
                                     : sel.checkpoint_path;
    std::ofstream report(out_path(cfg, "selection.txt"));
    if (!report) throw IoError("cannot write selection report");
    report << "checkpoint=" << sel_name << "\n";
    report << "epoch=" << sel.epoch << "\n";
    std::snprintf(buf, sizeof(buf), "validation_loss=%.6f\n", sel.validation_loss);
    report << buf;
    std::snprintf(buf, sizeof(buf), "threshold=%.2f\n", sel.threshold);
    report << buf;
    std::snprintf(buf, sizeof(buf), "f1_macro=%.6f\n", sel.f1_macro);
    report << buf;
    std::printf("selected epoch=%u threshold=%.2f f1_macro=%.6f\n", sel.epoch, sel.threshold,
                sel.f1_macro);
    return 0;
}

int cmd_infer(const cli::RunConfig& cfg) {
    ensure_out_dir(cfg.get("out"));
    const Checkpoint ckpt = load_checkpoint(require_path(cfg, "ckpt"));
    const auto wcfg = cfg.windowing_config();
    const Recording rec =
        preprocess_session(load_recording(require_path(cfg, "rec")), wcfg.frame_rate_hz);

    // Inference needs no labels: window against an empty event track.
    const auto windows = windowed_session(rec, EventTrack{}, wcfg, "infer");
    ProbabilitySequence trace =
        predict_session(ckpt.params, ckpt.cfg, windows, rec.n_samples());

    const double rate = cfg.get_num("rate");
    if (rate > 0.0 && rate != trace.frame_rate_hz) trace = resample_probs(trace, rate);
    save_prob_trace(trace, out_path(cfg, "trace.txt"));

    if (cfg.is_set("threshold")) {
        const double tau = cfg.get_num("threshold");
        const LabelVector seg = apply_threshold(trace, tau);
        std::ofstream seg_out(out_path(cfg, "segmentation.txt"));
        if (!seg_out) throw IoError("cannot write segmentation");
        char buf[48];
        std::snprintf(buf, sizeof(buf), "rate_hz=%.6f\n", trace.frame_rate_hz);
        seg_out << buf;
        for (auto v : seg.values) seg_out << int(v) << "\n";
    }
    std::printf("frames=%zu rate_hz=%.3f trace=%s\n", trace.size(), trace.frame_rate_hz,
                out_path(cfg, "trace.txt").c_str());
    return 0;
}

int cmd_eval(const cli::RunConfig& cfg) {
    ensure_out_dir(cfg.get("out"));
    const ProbabilitySequence trace = load_prob_trace(require_path(cfg, "pred"));
    const EventTrack truth_events = load_events(require_path(cfg, "truth"));
    const LabelVector truth =
        rasterize_labels(truth_events, trace.frame_rate_hz, trace.size());

    const double tau = cfg.is_set("threshold") ? cfg.get_num("threshold") : 0.5;
    MetricReport report = compute_metrics(apply_threshold(trace, tau), truth);
    report.threshold = tau;
    report.checkpoint = cfg.get("checkpoint_label");
    if (report.degenerate_truth)
        std::fprintf(stderr, "warning: a class is absent from the truth labels\n");
    save_metric_report(report, out_path(cfg, "report.txt"));
    std::printf("f1_macro=%.6f acc_macro=%.6f\n", report.f1_macro, report.acc_macro);
    return 0;
}

int cmd_info(const cli::RunConfig& cfg) {
    const ModelConfig mcfg = cfg.model_config();
    std::printf("count_params=%zu\n", count_params(mcfg));
    for (const auto& line : cfg.dump()) std::printf("%s\n", line.c_str());
    return 0;
}

int usage() {
    std::fprintf(stderr,
                 "usage: mebm <synth|train|sweep|infer|eval|info> [--config PATH] "
                 "[--key value ...]\n");
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) return usage();
    const std::string command = argv[1];

    try {
        cli::RunConfig cfg;
        // First pass: the config file layer.
        std::vector<std::pair<std::string, std::string>> flags;
        for (int i = 2; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.rfind("--", 0) != 0) throw ConfigError("expected --key, got '" + arg + "'");
            arg = arg.substr(2);
            std::string value;
            const auto eq = arg.find('=');
            if (eq != std::string::npos) {
                value = arg.substr(eq + 1);
                arg = arg.substr(0, eq);
            } else {
                if (i + 1 >= argc) throw ConfigError("flag --" + arg + " needs a value");
                value = argv[++i];
            }
            if (arg == "config")
                cfg.apply_file(value);
            else
                flags.emplace_back(arg, value);
        }
        // Second pass: flags override the file.
        for (const auto& [key, value] : flags) cfg.apply_flag(key, value);

        if (command == "synth") return cmd_synth(cfg);
        if (command == "train") return cmd_train(cfg);
        if (command == "sweep") return cmd_sweep(cfg);
        if (command == "infer") return cmd_infer(cfg);
        if (command == "eval") return cmd_eval(cfg);
        if (command == "info") return cmd_info(cfg);
        std::fprintf(stderr, "unknown command '%s'\n", command.c_str());
        return usage();
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
