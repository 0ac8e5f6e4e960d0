#include "mebm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace mebm {

LabelVector apply_threshold(const ProbabilitySequence& p, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("threshold must lie in (0,1)");
    LabelVector out;
    out.frame_rate_hz = p.frame_rate_hz;
    out.values.resize(p.size());
    for (size_t k = 0; k < p.size(); ++k) out.values[k] = p.values[k] >= tau ? 1 : 0;
    return out;
}

namespace {

struct ClassCounts {
    // counts[pred][truth]
    uint64_t n[2][2] = {{0, 0}, {0, 0}};
};

ClassCounts confusion(const LabelVector& pred, const LabelVector& truth) {
    if (pred.size() != truth.size() || pred.size() == 0)
        throw DimensionError("prediction/truth length mismatch");
    ClassCounts c;
    for (size_t k = 0; k < pred.size(); ++k) {
        const int p = pred.values[k] ? 1 : 0;
        const int t = truth.values[k] ? 1 : 0;
        ++c.n[p][t];
    }
    return c;
}

// F1 for class `cls` as positive: 2TP/(2TP + FP + FN), 0 when undefined.
double class_f1(const ClassCounts& c, int cls) {
    const uint64_t tp = c.n[cls][cls];
    const uint64_t fp = c.n[cls][1 - cls];
    const uint64_t fn = c.n[1 - cls][cls];
    const uint64_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double f1_macro(const LabelVector& pred, const LabelVector& truth) {
    const ClassCounts c = confusion(pred, truth);
    return 0.5 * (class_f1(c, 0) + class_f1(c, 1));
}

double acc_macro(const LabelVector& pred, const LabelVector& truth, bool* warning) {
    const ClassCounts c = confusion(pred, truth);
    if (warning) *warning = false;
    double recalls[2];
    for (int cls = 0; cls < 2; ++cls) {
        const uint64_t in_truth = c.n[0][cls] + c.n[1][cls];
        if (in_truth == 0) {
            const uint64_t in_pred = c.n[cls][0] + c.n[cls][1];
            recalls[cls] = in_pred == 0 ? 1.0 : 0.0;
            if (warning) *warning = true;
        } else {
            recalls[cls] = static_cast<double>(c.n[cls][cls]) / static_cast<double>(in_truth);
        }
    }
    return 0.5 * (recalls[0] + recalls[1]);
}

MetricReport compute_metrics(const LabelVector& pred, const LabelVector& truth) {
    const ClassCounts c = confusion(pred, truth);
    MetricReport r;
    r.tp = c.n[1][1];
    r.fp = c.n[1][0];
    r.fn = c.n[0][1];
    r.tn = c.n[0][0];
    for (int cls = 0; cls < 2; ++cls) {
        const uint64_t tp = c.n[cls][cls];
        const uint64_t predicted = c.n[cls][0] + c.n[cls][1];
        const uint64_t actual = c.n[0][cls] + c.n[1][cls];
        r.precision[cls] = predicted == 0 ? 0.0
                                          : static_cast<double>(tp) / static_cast<double>(predicted);
        r.recall[cls] = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
        r.f1[cls] = class_f1(c, cls);
    }
    r.f1_macro = 0.5 * (r.f1[0] + r.f1[1]);
    r.acc_macro = acc_macro(pred, truth, &r.degenerate_truth);
    return r;
}

std::vector<SweepPoint> sweep_thresholds(const ProbabilitySequence& p, const LabelVector& truth) {
    if (p.size() != truth.size()) throw DimensionError("prediction/truth length mismatch");
    std::vector<SweepPoint> out;
    out.reserve(99);
    for (int k = 1; k <= 99; ++k) {
        const double tau = 0.01 * static_cast<double>(k);
        out.push_back({tau, f1_macro(apply_threshold(p, tau), truth)});
    }
    return out;
}

ProbabilitySequence merge_overlaps(
    const std::vector<std::pair<size_t, ProbabilitySequence>>& windows, size_t session_len) {
    if (windows.empty()) throw DegenerateError("no windows to merge");
    if (session_len == 0) throw DegenerateError("empty session");

    std::vector<double> sum(session_len, 0.0);
    std::vector<uint32_t> cover(session_len, 0);
    double rate = 0.0;
    for (const auto& [start, probs] : windows) {
        if (rate == 0.0) rate = probs.frame_rate_hz;
        for (size_t t = 0; t < probs.size(); ++t) {
            const size_t frame = start + t;
            if (frame >= session_len) break;
            sum[frame] += probs.values[t];
            ++cover[frame];
        }
    }

    ProbabilitySequence out;
    out.frame_rate_hz = rate;
    out.values.resize(session_len);
    long last_covered = -1;
    for (size_t f = 0; f < session_len; ++f)
        if (cover[f]) {
            out.values[f] = sum[f] / static_cast<double>(cover[f]);
            last_covered = static_cast<long>(f);
        }
    if (last_covered < 0) throw DegenerateError("windows cover no session frame");
    // Uncovered frames copy the nearest covered value; with step <= window
    // only a trailing remainder can be uncovered.
    for (size_t f = 0; f < session_len; ++f)
        if (!cover[f]) {
            long nearest = -1;
            for (long d = 1; d < static_cast<long>(session_len); ++d) {
                const long lo = static_cast<long>(f) - d;
                const long hi = static_cast<long>(f) + d;
                if (lo >= 0 && cover[static_cast<size_t>(lo)]) { nearest = lo; break; }
                if (hi < static_cast<long>(session_len) && cover[static_cast<size_t>(hi)]) {
                    nearest = hi;
                    break;
                }
            }
            out.values[f] = out.values[static_cast<size_t>(nearest)];
        }
    return out;
}

ProbabilitySequence predict_session(const ModelParams& params, const ModelConfig& cfg,
                                    const std::vector<TrainingWindow>& windows,
                                    size_t session_len) {
    std::vector<std::pair<size_t, ProbabilitySequence>> preds;
    preds.reserve(windows.size());
    for (const auto& w : windows) {
        ForwardOptions opts;
        opts.frame_rate_hz = w.labels.frame_rate_hz;
        preds.emplace_back(w.start_frame, model_forward(w.signal, params, cfg, opts));
    }
    return merge_overlaps(preds, session_len);
}

Selection select_best(const CheckpointStore& store, const EvalSession& val) {
    if (store.entries.empty()) throw std::invalid_argument("checkpoint store is empty");

    Selection best;
    bool have_best = false;
    for (const auto& entry : store.entries) {
        const Checkpoint ckpt = load_checkpoint(entry.path);
        const ProbabilitySequence trace =
            predict_session(ckpt.params, ckpt.cfg, val.windows, val.n_frames);
        for (const auto& [tau, f1] : sweep_thresholds(trace, val.truth)) {
            // Strict ordering keeps the result independent of enumeration
            // order: f1 desc, validation loss asc, tau asc, epoch asc.
            const bool better =
                !have_best || f1 > best.f1_macro ||
                (f1 == best.f1_macro &&
                 (entry.validation_loss < best.validation_loss ||
                  (entry.validation_loss == best.validation_loss &&
                   (tau < best.threshold ||
                    (tau == best.threshold && entry.epoch < best.epoch)))));
            if (better) {
                best = {entry.path, entry.epoch, entry.validation_loss, tau, f1};
                have_best = true;
            }
        }
    }
    return best;
}

ProbabilitySequence resample_probs(const ProbabilitySequence& p, double target_hz) {
    if (p.size() < 2) throw DegenerateError("need at least two probabilities to resample");
    if (!(target_hz > 0.0) || !(p.frame_rate_hz > 0.0))
        throw std::invalid_argument("rates must be positive");

    const double span_s = static_cast<double>(p.size() - 1) / p.frame_rate_hz;
    const auto n_out = static_cast<size_t>(std::llround(span_s * target_hz)) + 1;
    if (n_out < 2) throw DegenerateError("target rate too low for this trace");

    ProbabilitySequence out;
    out.frame_rate_hz = target_hz;
    out.values.resize(n_out);
    for (size_t j = 0; j < n_out; ++j) {
        const double pos = static_cast<double>(j) / target_hz * p.frame_rate_hz;
        double v;
        if (pos >= static_cast<double>(p.size() - 1)) {
            v = p.values[p.size() - 1];
        } else {
            const auto i0 = static_cast<size_t>(pos);
            const double frac = pos - static_cast<double>(i0);
            v = p.values[i0] * (1.0 - frac) + p.values[i0 + 1] * frac;
        }
        out.values[j] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

void save_prob_trace(const ProbabilitySequence& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write probability trace: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "rate_hz=%.6f\n", p.frame_rate_hz);
    out << buf;
    for (double v : p.values) {
        std::snprintf(buf, sizeof(buf), "%.6f\n", v);
        out << buf;
    }
    if (!out) throw IoError("failed writing probability trace: " + path);
}

ProbabilitySequence load_prob_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open probability trace: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("rate_hz=", 0) != 0)
        throw FormatError("probability trace missing rate_hz header: " + path);
    ProbabilitySequence p;
    p.frame_rate_hz = std::stod(header.substr(8));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        p.values.push_back(std::stod(line));
    }
    return p;
}

void save_metric_report(const MetricReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metric report: " + path);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "f1_macro=%.6f\n", report.f1_macro);
    out << buf;
    std::snprintf(buf, sizeof(buf), "acc_macro=%.6f\n", report.acc_macro);
    out << buf;
    out << "tp=" << report.tp << "\nfp=" << report.fp << "\nfn=" << report.fn
        << "\ntn=" << report.tn << "\n";
    std::snprintf(buf, sizeof(buf), "threshold=%.6f\n", report.threshold);
    out << buf;
    out << "checkpoint=" << report.checkpoint << "\n";
    if (!out) throw IoError("failed writing metric report: " + path);
}

}  // namespace mebm
