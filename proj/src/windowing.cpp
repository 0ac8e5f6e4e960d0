#include "mebm/windowing.hpp"

#include <algorithm>
#include <cmath>

namespace mebm {

size_t WindowingConfig::window_frames() const {
    return static_cast<size_t>(std::llround(window_s * frame_rate_hz));
}

size_t WindowingConfig::step_frames() const {
    return static_cast<size_t>(std::llround(step_s * frame_rate_hz));
}

void validate(const WindowingConfig& cfg) {
    if (!(cfg.frame_rate_hz > 0.0)) throw std::invalid_argument("frame rate must be positive");
    if (!(cfg.step_s > 0.0 && cfg.step_s <= cfg.window_s))
        throw std::invalid_argument("step must satisfy 0 < step <= window");
    if (cfg.window_frames() < 1 || cfg.step_frames() < 1)
        throw std::invalid_argument("window and step must span at least one frame");
}

EventTrack jitter_onsets(const EventTrack& events, size_t jitter_frames, double frame_rate_hz,
                         Rng& rng) {
    validate(events);
    if (!(frame_rate_hz > 0.0)) throw std::invalid_argument("frame rate must be positive");

    const double frame_s = 1.0 / frame_rate_hz;
    EventTrack out;
    out.intervals.reserve(events.intervals.size());
    double prev_offset = 0.0;
    for (const auto& iv : events.intervals) {
        const auto shift =
            static_cast<double>(rng.uniform_int(-static_cast<int64_t>(jitter_frames),
                                                static_cast<int64_t>(jitter_frames)));
        const double lo = std::max(0.0, out.intervals.empty() ? 0.0 : prev_offset);
        const double hi = std::max(lo, iv.offset_s - frame_s);
        const double onset = std::clamp(iv.onset_s + shift * frame_s, lo, hi);
        out.intervals.push_back({onset, iv.offset_s});
        prev_offset = iv.offset_s;
    }
    return out;
}

std::vector<TrainingWindow> extract_windows(const Recording& rec, const EventTrack& events,
                                            const WindowingConfig& cfg, Rng& rng, bool training,
                                            const std::string& session_id) {
    validate(rec);
    validate(cfg);
    if (std::abs(rec.sample_rate_hz - cfg.frame_rate_hz) > 1e-9)
        throw std::invalid_argument("recording must already be at the windowing frame rate");

    const size_t n = rec.n_samples();
    const size_t t_window = cfg.window_frames();
    const size_t t_step = cfg.step_frames();
    if (n < t_window) throw DegenerateError("recording shorter than one window");

    const size_t count = (n - t_window) / t_step + 1;
    std::vector<TrainingWindow> windows;
    windows.reserve(count);
    for (size_t w = 0; w < count; ++w) {
        const size_t start = w * t_step;
        TrainingWindow tw;
        tw.start_frame = start;
        tw.session_id = session_id;
        tw.signal = Mat(rec.n_channels(), t_window);
        for (size_t c = 0; c < rec.n_channels(); ++c)
            for (size_t t = 0; t < t_window; ++t) tw.signal(c, t) = rec.data[c][start + t];

        // Session-level rasterization sliced at [start, start+T), so window
        // labels agree with the full-session labels of the same events.
        const EventTrack labeled =
            training ? jitter_onsets(events, cfg.jitter_frames, cfg.frame_rate_hz, rng) : events;
        const LabelVector session = rasterize_labels(labeled, cfg.frame_rate_hz, n);
        tw.labels.frame_rate_hz = cfg.frame_rate_hz;
        tw.labels.values.assign(session.values.begin() + static_cast<long>(start),
                                session.values.begin() + static_cast<long>(start + t_window));
        windows.push_back(std::move(tw));
    }
    return windows;
}

TrainingWindow normalize_segment(const TrainingWindow& w) {
    if (w.signal.cols < 2) throw std::invalid_argument("window too short to normalize");
    if (w.signal.cols != w.labels.size())
        throw std::invalid_argument("window signal and labels disagree on length");

    TrainingWindow out = w;
    const double n = static_cast<double>(w.signal.cols);
    for (size_t c = 0; c < out.signal.rows; ++c) {
        double* row = out.signal.row(c);
        double mean = 0.0;
        for (size_t t = 0; t < out.signal.cols; ++t) mean += row[t];
        mean /= n;
        double var = 0.0;
        for (size_t t = 0; t < out.signal.cols; ++t) {
            const double d = row[t] - mean;
            var += d * d;
        }
        const double scale = 1.0 / (std::sqrt(var / n) + 1e-8);
        for (size_t t = 0; t < out.signal.cols; ++t) row[t] = (row[t] - mean) * scale;
    }
    return out;
}

}  // namespace mebm
