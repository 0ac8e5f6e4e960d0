#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mebm/errors.hpp"

namespace mebm {

enum class ChannelKind : uint8_t { grad = 0, mag = 1, other = 2 };

struct ChannelMeta {
    std::string name;
    ChannelKind kind = ChannelKind::grad;
};

// Multichannel time-series. data[c] holds channel c's N samples; samples are
// float32 to match the on-disk MEGR encoding, statistics are accumulated in
// double everywhere.
struct Recording {
    double sample_rate_hz = 0.0;
    std::vector<ChannelMeta> channels;
    std::vector<std::vector<float>> data;

    size_t n_channels() const { return data.size(); }
    size_t n_samples() const { return data.empty() ? 0 : data[0].size(); }
};

// Speech intervals in seconds, sorted by onset, non-overlapping.
struct SpeechInterval {
    double onset_s = 0.0;
    double offset_s = 0.0;
};

struct EventTrack {
    std::vector<SpeechInterval> intervals;
};

struct LabelVector {
    double frame_rate_hz = 0.0;
    std::vector<uint8_t> values;  // entries in {0,1}

    size_t size() const { return values.size(); }
};

// Throws std::invalid_argument when an invariant is violated.
void validate(const Recording& rec);
void validate(const EventTrack& events);

// MEGR container, see README for the byte layout.
Recording load_recording(const std::string& path);
void save_recording(const Recording& rec, const std::string& path);

// Events text file: "onset_s<TAB>offset_s" per line, '#' comments.
EventTrack load_events(const std::string& path);
void save_events(const EventTrack& events, const std::string& path);

// Keep only channels of the requested kind, order preserved.
Recording select_channels(const Recording& rec, ChannelKind kind);

// Anti-aliased (moving average when downsampling) linear-interpolation
// resampling onto the uniform target grid anchored at t = 0.
Recording resample(const Recording& rec, double target_hz);

// Per-channel z-score over the full length: (x - mean) / (std + 1e-8),
// population std, double accumulation.
Recording normalize_temporal(const Recording& rec);

// Frame k (center (k + 0.5)/rate) is 1 iff the center lies in some
// [onset, offset).
LabelVector rasterize_labels(const EventTrack& events, double frame_rate_hz, size_t n_frames);

}  // namespace mebm
