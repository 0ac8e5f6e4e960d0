#include "mebm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mebm/rng.hpp"

namespace mebm {

namespace {
constexpr double kCarrierHz = 10.0;
constexpr double kRampS = 0.05;  // half-cosine ramp at each interval boundary
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

void validate(const SynthConfig& cfg) {
    if (cfg.n_channels < 1) throw ConfigError("need at least one channel");
    if (cfg.n_informative > cfg.n_channels)
        throw ConfigError("informative channels cannot exceed channel count");
    if (!(cfg.duration_s > 0.0) || !(cfg.sample_rate_hz > 0.0))
        throw ConfigError("duration and sample rate must be positive");
    if (!(cfg.snr >= 0.0)) throw ConfigError("snr must be non-negative");
    if (!(cfg.speech_dur_min_s > 0.0 && cfg.speech_dur_min_s < cfg.speech_dur_max_s))
        throw ConfigError("speech duration range must be positive with min < max");
    if (!(cfg.silence_dur_min_s > 0.0 && cfg.silence_dur_min_s < cfg.silence_dur_max_s))
        throw ConfigError("silence duration range must be positive with min < max");
}

std::pair<Recording, EventTrack> generate_session(const SynthConfig& cfg) {
    validate(cfg);

    // Alternating silence/speech until the session is filled; the final
    // interval is truncated at the session end.
    Rng timeline_rng(derive_seed(cfg.seed, "synth.timeline"));
    EventTrack events;
    std::vector<double> phases;  // carrier phase per speech interval
    Rng phase_rng(derive_seed(cfg.seed, "synth.phase"));
    double t = 0.0;
    bool speech = false;
    while (t < cfg.duration_s) {
        const double dur = speech
                               ? timeline_rng.uniform(cfg.speech_dur_min_s, cfg.speech_dur_max_s)
                               : timeline_rng.uniform(cfg.silence_dur_min_s, cfg.silence_dur_max_s);
        const double end = std::min(t + dur, cfg.duration_s);
        if (speech && end > t) {
            events.intervals.push_back({t, end});
            phases.push_back(phase_rng.uniform(0.0, kTwoPi));
        }
        t = end;
        speech = !speech;
    }

    const auto n_samples =
        static_cast<size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
    Recording rec;
    rec.sample_rate_hz = cfg.sample_rate_hz;
    rec.channels.resize(cfg.n_channels);
    rec.data.assign(cfg.n_channels, std::vector<float>(n_samples));
    char name[32];
    for (size_t c = 0; c < cfg.n_channels; ++c) {
        std::snprintf(name, sizeof(name), "GRAD%03zu", c);
        rec.channels[c] = {name, ChannelKind::grad};
    }

    for (size_t c = 0; c < cfg.n_channels; ++c) {
        Rng noise_rng(derive_seed(cfg.seed, "synth.noise", c));
        auto& row = rec.data[c];
        for (size_t i = 0; i < n_samples; ++i) row[i] = static_cast<float>(noise_rng.gaussian());
    }

    // Informative channels: add the enveloped carrier during speech.
    for (size_t iv = 0; iv < events.intervals.size(); ++iv) {
        const auto& interval = events.intervals[iv];
        const double dur = interval.offset_s - interval.onset_s;
        const double ramp = std::min(kRampS, dur / 2.0);
        const auto first = static_cast<size_t>(std::ceil(interval.onset_s * cfg.sample_rate_hz));
        const auto last = std::min(
            n_samples, static_cast<size_t>(std::ceil(interval.offset_s * cfg.sample_rate_hz)));
        for (size_t i = first; i < last; ++i) {
            const double time = static_cast<double>(i) / cfg.sample_rate_hz;
            double env = 1.0;
            const double from_onset = time - interval.onset_s;
            const double to_offset = interval.offset_s - time;
            if (from_onset < ramp) env = 0.5 * (1.0 - std::cos(kTwoPi / 2.0 * from_onset / ramp));
            else if (to_offset < ramp) env = 0.5 * (1.0 - std::cos(kTwoPi / 2.0 * to_offset / ramp));
            const double carrier = std::sin(kTwoPi * kCarrierHz * time + phases[iv]);
            const auto add = static_cast<float>(cfg.snr * env * carrier);
            for (size_t c = 0; c < cfg.n_informative; ++c) rec.data[c][i] += add;
        }
    }
    return {std::move(rec), std::move(events)};
}

}  // namespace mebm
