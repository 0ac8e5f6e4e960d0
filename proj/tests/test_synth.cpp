#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mebm/synth.hpp"
#include "test_util.hpp"

using namespace mebm;

namespace {

double channel_variance(const std::vector<float>& xs, size_t begin, size_t end) {
    double mean = 0.0;
    for (size_t i = begin; i < end; ++i) mean += xs[i];
    mean /= static_cast<double>(end - begin);
    double var = 0.0;
    for (size_t i = begin; i < end; ++i) var += (xs[i] - mean) * (xs[i] - mean);
    return var / static_cast<double>(end - begin);
}

}  // namespace

TEST_CASE("generation is a pure function of the seed") {
    testutil::TempDir dir("synth_det");
    SynthConfig cfg;
    cfg.duration_s = 30.0;
    const auto [rec_a, ev_a] = generate_session(cfg);
    const auto [rec_b, ev_b] = generate_session(cfg);

    save_recording(rec_a, dir.file("a.megr"));
    save_recording(rec_b, dir.file("b.megr"));
    CHECK(testutil::read_bytes(dir.file("a.megr")) == testutil::read_bytes(dir.file("b.megr")));
    REQUIRE(ev_a.intervals.size() == ev_b.intervals.size());
    for (size_t i = 0; i < ev_a.intervals.size(); ++i) {
        CHECK(ev_a.intervals[i].onset_s == ev_b.intervals[i].onset_s);
        CHECK(ev_a.intervals[i].offset_s == ev_b.intervals[i].offset_s);
    }

    SynthConfig other = cfg;
    other.seed = 1;
    const auto [rec_c, ev_c] = generate_session(other);
    save_recording(rec_c, dir.file("c.megr"));
    CHECK(testutil::read_bytes(dir.file("a.megr")) != testutil::read_bytes(dir.file("c.megr")));
}

TEST_CASE("generated sessions satisfy the event and channel contracts") {
    SynthConfig cfg;
    cfg.duration_s = 120.0;
    const auto [rec, events] = generate_session(cfg);

    CHECK(rec.n_channels() == cfg.n_channels);
    CHECK(rec.n_samples() == static_cast<size_t>(cfg.duration_s * cfg.sample_rate_hz));
    for (const auto& ch : rec.channels) CHECK(ch.kind == ChannelKind::grad);

    CHECK_NOTHROW(validate(events));
    REQUIRE(!events.intervals.empty());
    // strict alternation leaves silence between consecutive speech intervals
    for (size_t i = 1; i < events.intervals.size(); ++i)
        CHECK(events.intervals[i].onset_s > events.intervals[i - 1].offset_s);
    for (const auto& iv : events.intervals) {
        CHECK(iv.offset_s <= cfg.duration_s + 1e-9);
        CHECK(iv.offset_s - iv.onset_s <= cfg.speech_dur_max_s + 1e-9);
    }
}

TEST_CASE("speech fraction for the desk configuration lands in the expected band") {
    SynthConfig cfg;  // 8 channels, 4 informative, 120 s, snr 2.0, seed 0
    const auto [rec, events] = generate_session(cfg);
    double speech = 0.0;
    for (const auto& iv : events.intervals) speech += iv.offset_s - iv.onset_s;
    const double fraction = speech / cfg.duration_s;
    CHECK(fraction >= 0.45);
    CHECK(fraction <= 0.80);

    // Direct simulation of the duration process as an independent bound.
    Rng sim(99);
    double sim_speech = 0.0, sim_total = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double silence = sim.uniform(cfg.silence_dur_min_s, cfg.silence_dur_max_s);
        const double talk = sim.uniform(cfg.speech_dur_min_s, cfg.speech_dur_max_s);
        sim_speech += talk;
        sim_total += talk + silence;
    }
    const double expected = sim_speech / sim_total;  // ~0.66
    CHECK(std::abs(fraction - expected) < 0.15);
}

TEST_CASE("noise statistics match the unit-variance contract") {
    SynthConfig cfg;
    cfg.duration_s = 60.0;
    cfg.seed = 3;
    const auto [rec, events] = generate_session(cfg);
    const size_t n = rec.n_samples();

    // Non-informative channels are pure unit noise.
    for (size_t c = cfg.n_informative; c < cfg.n_channels; ++c) {
        const double var = channel_variance(rec.data[c], 0, n);
        CHECK(var >= 0.8);
        CHECK(var <= 1.2);
    }

    // Informative channels during silence match the noise distribution.
    std::vector<std::pair<size_t, size_t>> silence_spans;
    double prev_end = 0.0;
    for (const auto& iv : events.intervals) {
        const auto a = static_cast<size_t>(prev_end * cfg.sample_rate_hz);
        const auto b = static_cast<size_t>(iv.onset_s * cfg.sample_rate_hz);
        if (b > a + 50) silence_spans.emplace_back(a, b);
        prev_end = iv.offset_s;
    }
    REQUIRE(!silence_spans.empty());
    double info_var = 0.0, noise_var = 0.0;
    size_t count = 0;
    for (const auto& [a, b] : silence_spans) {
        for (size_t c = 0; c < cfg.n_informative; ++c) info_var += channel_variance(rec.data[c], a, b);
        for (size_t c = cfg.n_informative; c < cfg.n_channels; ++c)
            noise_var += channel_variance(rec.data[c], a, b);
        count += 1;
    }
    info_var /= static_cast<double>(count * cfg.n_informative);
    noise_var /= static_cast<double>(count * (cfg.n_channels - cfg.n_informative));
    CHECK(std::abs(info_var - noise_var) <= 0.1);
}

TEST_CASE("snr zero makes informative channels statistically plain noise") {
    SynthConfig cfg;
    cfg.snr = 0.0;
    cfg.duration_s = 60.0;
    const auto [rec, events] = generate_session(cfg);
    for (size_t c = 0; c < cfg.n_channels; ++c) {
        const double var = channel_variance(rec.data[c], 0, rec.n_samples());
        CHECK(var >= 0.8);
        CHECK(var <= 1.2);
    }
}

TEST_CASE("informative channels gain power during speech at positive snr") {
    SynthConfig cfg;
    cfg.duration_s = 60.0;
    const auto [rec, events] = generate_session(cfg);

    double speech_var = 0.0;
    size_t spans = 0;
    for (const auto& iv : events.intervals) {
        const auto a = static_cast<size_t>((iv.onset_s + 0.1) * cfg.sample_rate_hz);
        const auto b = static_cast<size_t>((iv.offset_s - 0.1) * cfg.sample_rate_hz);
        if (b <= a + 50) continue;
        speech_var += channel_variance(rec.data[0], a, b);
        ++spans;
    }
    REQUIRE(spans > 0);
    speech_var /= static_cast<double>(spans);
    // unit noise + snr^2/2 carrier power ~ 3.0
    CHECK(speech_var > 2.0);
}

TEST_CASE("degenerate duration ranges are rejected") {
    SynthConfig cfg;
    cfg.speech_dur_min_s = 2.0;
    cfg.speech_dur_max_s = 1.0;
    CHECK_THROWS_AS(generate_session(cfg), ConfigError);
    SynthConfig cfg2;
    cfg2.n_informative = 99;
    CHECK_THROWS_AS(generate_session(cfg2), ConfigError);
}
