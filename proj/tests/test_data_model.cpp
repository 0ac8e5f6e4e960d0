#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "mebm/data_model.hpp"
#include "test_util.hpp"

using namespace mebm;
using testutil::TempDir;

namespace {

// Independent two-pass mean / population-std oracle.
std::pair<double, double> mean_std(const std::vector<float>& xs) {
    double mean = 0.0;
    for (float x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (float x : xs) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

Recording tiny_recording() {
    Recording rec;
    rec.sample_rate_hz = 100.0;
    rec.channels = {{"A", ChannelKind::grad}, {"B", ChannelKind::mag}};
    rec.data = {{1.0f, 2.0f, 3.0f, 4.0f}, {5.0f, 6.0f, 7.0f, 8.0f}};
    return rec;
}

}  // namespace

TEST_CASE("recording round-trips through the MEGR format bit-exactly") {
    TempDir dir("megr");
    const Recording rec = tiny_recording();
    const std::string path = dir.file("a.megr");
    save_recording(rec, path);

    const Recording loaded = load_recording(path);
    CHECK(loaded.sample_rate_hz == rec.sample_rate_hz);
    REQUIRE(loaded.n_channels() == 2);
    CHECK(loaded.channels[0].name == "A");
    CHECK(loaded.channels[1].kind == ChannelKind::mag);
    CHECK(loaded.data == rec.data);

    const std::string path2 = dir.file("b.megr");
    save_recording(loaded, path2);
    CHECK(testutil::read_bytes(path) == testutil::read_bytes(path2));
}

TEST_CASE("a 1x1 recording serializes to a single payload float") {
    TempDir dir("megr_tiny");
    Recording rec;
    rec.sample_rate_hz = 100.0;
    rec.channels = {{"only", ChannelKind::grad}};
    rec.data = {{0.0f}};
    const std::string path = dir.file("tiny.megr");
    save_recording(rec, path);
    const auto bytes = testutil::read_bytes(path);
    // magic 4 + version 4 + channels 4 + samples 8 + rate 8 + name_len 2 +
    // name 4 + kind 1 + one float32
    CHECK(bytes.size() == 4 + 4 + 4 + 8 + 8 + 2 + 4 + 1 + 4);
    const Recording back = load_recording(path);
    CHECK(back.data[0][0] == 0.0f);
}

TEST_CASE("MEGR round-trip holds on random recordings") {
    TempDir dir("megr_rand");
    Rng rng(7);
    for (int i = 0; i < 25; ++i) {
        const Recording rec = testutil::random_recording(rng);
        const std::string p1 = dir.file("r1.megr");
        const std::string p2 = dir.file("r2.megr");
        save_recording(rec, p1);
        save_recording(load_recording(p1), p2);
        CHECK(testutil::read_bytes(p1) == testutil::read_bytes(p2));
    }
}

TEST_CASE("MEGR loader rejects malformed files") {
    TempDir dir("megr_bad");
    const Recording rec = tiny_recording();
    const std::string path = dir.file("a.megr");
    save_recording(rec, path);

    SUBCASE("bad magic") {
        auto bytes = testutil::read_bytes(path);
        bytes[0] = 'X';
        std::ofstream(dir.file("bad.megr"), std::ios::binary)
            .write(bytes.data(), static_cast<long>(bytes.size()));
        CHECK_THROWS_AS(load_recording(dir.file("bad.megr")), FormatError);
    }
    SUBCASE("declared sample count exceeds payload") {
        auto bytes = testutil::read_bytes(path);
        bytes.resize(bytes.size() - 4);  // drop one float
        std::ofstream(dir.file("short.megr"), std::ios::binary)
            .write(bytes.data(), static_cast<long>(bytes.size()));
        CHECK_THROWS_AS(load_recording(dir.file("short.megr")), LengthError);
    }
    SUBCASE("non-finite sample rate") {
        auto bytes = testutil::read_bytes(path);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::memcpy(bytes.data() + 4 + 4 + 4 + 8, &nan, sizeof(nan));
        std::ofstream(dir.file("nan.megr"), std::ios::binary)
            .write(bytes.data(), static_cast<long>(bytes.size()));
        CHECK_THROWS_AS(load_recording(dir.file("nan.megr")), HeaderError);
    }
    SUBCASE("channel name with NUL byte is rejected on save") {
        Recording bad = rec;
        bad.channels[0].name = std::string("A\0B", 3);
        CHECK_THROWS_AS(save_recording(bad, dir.file("nul.megr")), EncodingError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_recording(dir.file("nope.megr")), IoError); }
}

TEST_CASE("events files parse, reject disorder, and skip comments") {
    TempDir dir("events");
    {
        std::ofstream out(dir.file("ok.events"));
        out << "# comment\n0.5\t1.0\n2.0\t3.25\n";
    }
    const EventTrack events = load_events(dir.file("ok.events"));
    REQUIRE(events.intervals.size() == 2);
    CHECK(events.intervals[1].offset_s == doctest::Approx(3.25));

    {
        std::ofstream out(dir.file("bad.events"));
        out << "2.0\t3.0\n0.5\t1.0\n";
    }
    CHECK_THROWS_AS(load_events(dir.file("bad.events")), FormatError);

    save_events(events, dir.file("resaved.events"));
    const EventTrack again = load_events(dir.file("resaved.events"));
    CHECK(again.intervals.size() == events.intervals.size());
}

TEST_CASE("select_channels keeps matching rows in order") {
    Recording rec;
    rec.sample_rate_hz = 10.0;
    rec.channels = {{"g0", ChannelKind::grad}, {"m0", ChannelKind::mag}, {"g1", ChannelKind::grad}};
    rec.data = {{1.0f, 2.0f}, {3.0f, 4.0f}, {5.0f, 6.0f}};

    const Recording grads = select_channels(rec, ChannelKind::grad);
    REQUIRE(grads.n_channels() == 2);
    CHECK(grads.channels[0].name == "g0");
    CHECK(grads.channels[1].name == "g1");
    CHECK(grads.data[0] == rec.data[0]);
    CHECK(grads.data[1] == rec.data[2]);
    CHECK(grads.sample_rate_hz == rec.sample_rate_hz);

    SUBCASE("all matching is the identity") {
        const Recording all = select_channels(grads, ChannelKind::grad);
        CHECK(all.data == grads.data);
    }
    SUBCASE("no matching channel errors") {
        CHECK_THROWS_AS(select_channels(grads, ChannelKind::mag), EmptySelectionError);
    }
}

TEST_CASE("resample preserves constants and the sampling identity") {
    Recording rec;
    rec.sample_rate_hz = 250.0;
    rec.channels = {{"c", ChannelKind::grad}};
    rec.data = {std::vector<float>(2500, 5.0f)};

    const Recording down = resample(rec, 100.0);
    CHECK(down.n_samples() == 1000);
    for (float v : down.data[0]) CHECK(v == doctest::Approx(5.0).epsilon(1e-9));

    const Recording same = resample(rec, 250.0);
    CHECK(same.data == rec.data);
}

TEST_CASE("resample length rule and degenerate target") {
    Recording rec;
    rec.sample_rate_hz = 3.0;
    rec.channels = {{"c", ChannelKind::grad}};
    rec.data = {{1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f, 7.0f}};
    CHECK(resample(rec, 2.0).n_samples() == 5);  // round(7 * 2/3)
    CHECK_THROWS_AS(resample(rec, 0.01), DegenerateError);
}

TEST_CASE("resampled sinusoid tracks the analytic signal") {
    // 1 Hz at 250 Hz for 10 s, downsampled to 100 Hz.
    Recording rec;
    rec.sample_rate_hz = 250.0;
    rec.channels = {{"c", ChannelKind::grad}};
    rec.data = {std::vector<float>(2500)};
    for (size_t i = 0; i < 2500; ++i)
        rec.data[0][i] = static_cast<float>(std::sin(2.0 * M_PI * i / 250.0));

    const Recording down = resample(rec, 100.0);
    REQUIRE(down.n_samples() == 1000);
    double worst = 0.0;
    for (size_t k = 0; k < down.n_samples(); ++k) {
        const double expected = std::sin(2.0 * M_PI * k / 100.0);
        worst = std::max(worst, std::abs(down.data[0][k] - expected));
    }
    CHECK(worst <= 0.05);
}

TEST_CASE("down-then-up resampling reconstructs a band-limited sinusoid") {
    // cosine: zero slope at both ends, so the edge samples are honest
    Recording rec;
    rec.sample_rate_hz = 250.0;
    rec.channels = {{"c", ChannelKind::grad}};
    rec.data = {std::vector<float>(2500)};
    for (size_t i = 0; i < 2500; ++i)
        rec.data[0][i] = static_cast<float>(std::cos(2.0 * M_PI * 2.0 * i / 250.0));

    const Recording back = resample(resample(rec, 100.0), 250.0);
    REQUIRE(back.n_samples() == 2500);
    double worst = 0.0;
    for (size_t i = 0; i < 2500; ++i)
        worst = std::max(worst, std::abs(double(back.data[0][i]) - double(rec.data[0][i])));
    CHECK(worst <= 0.05);
}

TEST_CASE("normalize_temporal matches the two-pass oracle") {
    Recording rec;
    rec.sample_rate_hz = 100.0;
    rec.channels = {{"c", ChannelKind::grad}};
    rec.data = {{1.0f, 2.0f, 3.0f}};

    const Recording norm = normalize_temporal(rec);
    CHECK(norm.data[0][0] == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(norm.data[0][1] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(norm.data[0][2] == doctest::Approx(1.224745).epsilon(1e-6));

    // Oracle agreement on random data, plus the post-conditions.
    Rng rng(3);
    Recording wide = testutil::random_recording(rng, 4, 150);
    for (auto& row : wide.data)
        for (auto& v : row) v = v * 3.5f + 2.0f;
    const Recording z = normalize_temporal(wide);
    for (size_t c = 0; c < z.n_channels(); ++c) {
        auto [mean, sd] = mean_std(z.data[c]);
        CHECK(std::abs(mean) <= 1e-6);
        CHECK(std::abs(sd - 1.0) <= 1e-4);
        // explicit formula check against the oracle on the input
        auto [mean_in, sd_in] = mean_std(wide.data[c]);
        for (size_t i = 0; i < z.data[c].size(); ++i)
            CHECK(z.data[c][i] ==
                  doctest::Approx((wide.data[c][i] - mean_in) / (sd_in + 1e-8)).epsilon(1e-5));
    }
}

TEST_CASE("normalize_temporal handles constants and is idempotent") {
    Recording rec;
    rec.sample_rate_hz = 10.0;
    rec.channels = {{"c", ChannelKind::grad}};
    rec.data = {{7.0f, 7.0f, 7.0f}};
    const Recording z = normalize_temporal(rec);
    for (float v : z.data[0]) CHECK(v == 0.0f);

    Rng rng(11);
    Recording wide = testutil::random_recording(rng, 3, 100);
    const Recording once = normalize_temporal(wide);
    const Recording twice = normalize_temporal(once);
    for (size_t c = 0; c < once.n_channels(); ++c)
        for (size_t i = 0; i < once.data[c].size(); ++i)
            CHECK(std::abs(once.data[c][i] - twice.data[c][i]) <= 1e-6);
}

TEST_CASE("rasterize_labels uses frame centers against half-open intervals") {
    EventTrack events;
    events.intervals = {{0.0, 0.05}};
    const LabelVector labels = rasterize_labels(events, 100.0, 10);
    const std::vector<uint8_t> expected = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    CHECK(labels.values == expected);

    SUBCASE("empty track is all zeros") {
        const LabelVector zeros = rasterize_labels(EventTrack{}, 100.0, 10);
        CHECK(std::count(zeros.values.begin(), zeros.values.end(), 0) == 10);
    }
    SUBCASE("covering interval is all ones") {
        EventTrack full;
        full.intervals = {{0.0, 1.0}};
        const LabelVector ones = rasterize_labels(full, 100.0, 10);
        CHECK(std::count(ones.values.begin(), ones.values.end(), 1) == 10);
    }
    SUBCASE("intervals beyond the frame span are truncated silently") {
        EventTrack beyond;
        beyond.intervals = {{0.0, 0.02}, {5.0, 6.0}};
        const LabelVector labels2 = rasterize_labels(beyond, 100.0, 10);
        CHECK(labels2.size() == 10);
        CHECK(labels2.values[0] == 1);
        CHECK(labels2.values[9] == 0);
    }
}

TEST_CASE("rasterize_labels agrees with direct center enumeration on random tracks") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        EventTrack events;
        double t = rng.uniform() * 0.3;
        while (t < 4.0) {
            const double on = t;
            const double off = on + 0.05 + rng.uniform() * 0.8;
            events.intervals.push_back({on, off});
            t = off + 0.05 + rng.uniform() * 0.5;
        }
        const size_t n = 100 + rng.bounded(300);
        const double rate = 100.0;
        const LabelVector got = rasterize_labels(events, rate, n);
        REQUIRE(got.size() == n);
        for (size_t k = 0; k < n; ++k) {
            const double center = (k + 0.5) / rate;
            uint8_t expect = 0;
            for (const auto& iv : events.intervals)
                if (center >= iv.onset_s && center < iv.offset_s) expect = 1;
            CHECK(got.values[k] == expect);
        }
    }
}

TEST_CASE("enlarging an interval never clears a frame") {
    EventTrack small;
    small.intervals = {{0.3, 0.6}};
    EventTrack big;
    big.intervals = {{0.25, 0.7}};
    const LabelVector a = rasterize_labels(small, 100.0, 100);
    const LabelVector b = rasterize_labels(big, 100.0, 100);
    for (size_t k = 0; k < 100; ++k)
        if (a.values[k]) CHECK(b.values[k] == 1);
}
