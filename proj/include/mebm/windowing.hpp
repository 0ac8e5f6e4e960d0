#pragma once

#include <string>
#include <vector>

#include "mebm/data_model.hpp"
#include "mebm/matrix.hpp"
#include "mebm/rng.hpp"

namespace mebm {

// One training sample: a C_in x T signal slice plus aligned frame labels.
struct TrainingWindow {
    size_t start_frame = 0;
    Mat signal;          // C_in x T
    LabelVector labels;  // length T
    std::string session_id;
};

struct WindowingConfig {
    double window_s = 12.0;
    double step_s = 6.0;
    double frame_rate_hz = 100.0;
    size_t jitter_frames = 2;

    size_t window_frames() const;
    size_t step_frames() const;
};

void validate(const WindowingConfig& cfg);

// Shift each onset by a uniform integer draw from [-jitter, +jitter] frames
// (i.i.d. per interval); offsets untouched. Shifted onsets are clamped to
// stay non-negative, at least one frame before their offset, and not before
// the previous interval's offset.
EventTrack jitter_onsets(const EventTrack& events, size_t jitter_frames, double frame_rate_hz,
                         Rng& rng);

// Slice a session (already at cfg.frame_rate_hz) into fixed windows starting
// at frames 0, step, 2*step, ... Training mode rasterizes each window's
// labels from a freshly jittered copy of the events; evaluation mode uses
// the events as given.
std::vector<TrainingWindow> extract_windows(const Recording& rec, const EventTrack& events,
                                            const WindowingConfig& cfg, Rng& rng,
                                            bool training = true,
                                            const std::string& session_id = "");

// Per-channel z-score within the window; labels unchanged.
TrainingWindow normalize_segment(const TrainingWindow& w);

}  // namespace mebm
