#pragma once

#include <utility>

#include "mebm/data_model.hpp"

namespace mebm {

// Synthetic MEG-like session generator with known speech/silence truth.
// Informative channels carry a 10 Hz carrier under a ramped envelope during
// speech on top of unit Gaussian noise; the rest are pure noise.
struct SynthConfig {
    size_t n_channels = 8;
    size_t n_informative = 4;
    double duration_s = 120.0;
    double sample_rate_hz = 250.0;
    double snr = 2.0;  // informative-signal amplitude over unit noise
    double speech_dur_min_s = 0.5;
    double speech_dur_max_s = 4.0;
    double silence_dur_min_s = 0.3;
    double silence_dur_max_s = 2.0;
    uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

std::pair<Recording, EventTrack> generate_session(const SynthConfig& cfg);

}  // namespace mebm
