#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mebm/net.hpp"
#include "mebm/train.hpp"
#include "mebm/windowing.hpp"

namespace mebm {

// Confusion counts use speech (label 1) as the positive class.
struct MetricReport {
    double f1_macro = 0.0;
    double acc_macro = 0.0;
    double precision[2] = {0.0, 0.0};
    double recall[2] = {0.0, 0.0};
    double f1[2] = {0.0, 0.0};
    uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    bool degenerate_truth = false;  // a class missing from truth
    double threshold = 0.0;
    std::string checkpoint = "-";
};

struct SweepPoint {
    double tau = 0.0;
    double f1 = 0.0;
};

struct Selection {
    std::string checkpoint_path;
    uint32_t epoch = 0;
    double validation_loss = 0.0;
    double threshold = 0.0;
    double f1_macro = 0.0;
};

// Windowed view of a session plus its session-level (unjittered) truth.
struct EvalSession {
    std::vector<TrainingWindow> windows;
    LabelVector truth;
    size_t n_frames = 0;
};

// Frame k is 1 iff p_k >= tau.
LabelVector apply_threshold(const ProbabilitySequence& p, double tau);

// Macro-averaged F1 over {silence, speech}; empty-class F1 defined as 0.
double f1_macro(const LabelVector& pred, const LabelVector& truth);

// Balanced accuracy (mean per-class recall). A class absent from truth
// contributes recall 1 when also absent from pred, else 0; sets *warning.
double acc_macro(const LabelVector& pred, const LabelVector& truth, bool* warning = nullptr);

MetricReport compute_metrics(const LabelVector& pred, const LabelVector& truth);

// f1_macro at tau = 0.01, 0.02, ..., 0.99, ascending.
std::vector<SweepPoint> sweep_thresholds(const ProbabilitySequence& p, const LabelVector& truth);

// Arithmetic mean of all window predictions covering each frame; uncovered
// trailing frames copy the nearest covered value.
ProbabilitySequence merge_overlaps(
    const std::vector<std::pair<size_t, ProbabilitySequence>>& windows, size_t session_len);

// Eval-mode forward of every window, merged into a session trace.
ProbabilitySequence predict_session(const ModelParams& params, const ModelConfig& cfg,
                                    const std::vector<TrainingWindow>& windows,
                                    size_t session_len);

// Global argmax of f1_macro over (checkpoint x 99 thresholds); ties broken
// by lower validation loss, then lower tau, then earlier epoch.
Selection select_best(const CheckpointStore& store, const EvalSession& val);

// Linear interpolation onto the target rate over the same time span,
// clipped to [0,1].
ProbabilitySequence resample_probs(const ProbabilitySequence& p, double target_hz);

// Text formats: trace files ("rate_hz=..." header then one 6-decimal value
// per line) and flat key=value metric reports.
void save_prob_trace(const ProbabilitySequence& p, const std::string& path);
ProbabilitySequence load_prob_trace(const std::string& path);
void save_metric_report(const MetricReport& report, const std::string& path);

}  // namespace mebm
