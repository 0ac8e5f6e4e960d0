#include "mebm/data_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace mebm {

namespace {

constexpr char kMagic[4] = {'M', 'E', 'G', 'R'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    // Little-endian hosts only; static_assert keeps the assumption visible.
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw LengthError(std::string("truncated while reading ") + what);
    return value;
}

}  // namespace

void validate(const Recording& rec) {
    if (!(rec.sample_rate_hz > 0.0) || !std::isfinite(rec.sample_rate_hz))
        throw std::invalid_argument("recording sample rate must be positive and finite");
    if (rec.data.size() != rec.channels.size())
        throw std::invalid_argument("recording data row count does not match channel list");
    if (rec.n_samples() < 1) throw std::invalid_argument("recording must have at least one sample");
    for (const auto& row : rec.data)
        if (row.size() != rec.n_samples())
            throw std::invalid_argument("recording rows have unequal sample counts");
    for (size_t i = 0; i < rec.channels.size(); ++i)
        for (size_t j = i + 1; j < rec.channels.size(); ++j)
            if (rec.channels[i].name == rec.channels[j].name)
                throw std::invalid_argument("duplicate channel name: " + rec.channels[i].name);
}

void validate(const EventTrack& events) {
    double prev_offset = -std::numeric_limits<double>::infinity();
    for (const auto& iv : events.intervals) {
        if (!(iv.onset_s >= 0.0 && iv.onset_s < iv.offset_s))
            throw std::invalid_argument("interval must satisfy 0 <= onset < offset");
        if (iv.onset_s < prev_offset)
            throw std::invalid_argument("intervals must be sorted and non-overlapping");
        prev_offset = iv.offset_s;
    }
}

Recording load_recording(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open recording file: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad magic in recording file: " + path);
    const uint32_t version = read_le<uint32_t>(in, "version");
    if (version != kVersion)
        throw FormatError("unsupported recording version " + std::to_string(version));

    const uint32_t n_channels = read_le<uint32_t>(in, "channel count");
    const uint64_t n_samples = read_le<uint64_t>(in, "sample count");
    const double rate = read_le<double>(in, "sample rate");
    if (!std::isfinite(rate) || rate <= 0.0)
        throw HeaderError("sample rate is not positive and finite");
    if (n_channels == 0 || n_samples == 0)
        throw HeaderError("recording must declare at least one channel and sample");

    Recording rec;
    rec.sample_rate_hz = rate;
    rec.channels.resize(n_channels);
    for (auto& ch : rec.channels) {
        const uint16_t name_len = read_le<uint16_t>(in, "channel name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw LengthError("truncated while reading channel name");
        const uint8_t kind = read_le<uint8_t>(in, "channel kind");
        if (kind > 2) throw FormatError("unknown channel kind " + std::to_string(kind));
        ch.name = std::move(name);
        ch.kind = static_cast<ChannelKind>(kind);
    }

    rec.data.assign(n_channels, std::vector<float>(n_samples));
    for (auto& row : rec.data) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(n_samples * sizeof(float)));
        if (!in) throw LengthError("declared sample count exceeds payload length");
    }
    return rec;
}

void save_recording(const Recording& rec, const std::string& path) {
    validate(rec);
    for (const auto& ch : rec.channels) {
        if (ch.name.find('\0') != std::string::npos)
            throw EncodingError("channel name contains a NUL byte");
        if (ch.name.size() > std::numeric_limits<uint16_t>::max())
            throw EncodingError("channel name too long to encode");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open recording file for writing: " + path);

    out.write(kMagic, 4);
    write_le<uint32_t>(out, kVersion);
    write_le<uint32_t>(out, static_cast<uint32_t>(rec.n_channels()));
    write_le<uint64_t>(out, static_cast<uint64_t>(rec.n_samples()));
    write_le<double>(out, rec.sample_rate_hz);
    for (const auto& ch : rec.channels) {
        write_le<uint16_t>(out, static_cast<uint16_t>(ch.name.size()));
        out.write(ch.name.data(), static_cast<std::streamsize>(ch.name.size()));
        write_le<uint8_t>(out, static_cast<uint8_t>(ch.kind));
    }
    for (const auto& row : rec.data)
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!out) throw IoError("failed writing recording file: " + path);
}

EventTrack load_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open events file: " + path);

    EventTrack events;
    std::string line;
    size_t line_no = 0;
    double prev_onset = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double onset = 0.0, offset = 0.0;
        if (!(ls >> onset >> offset))
            throw FormatError("events line " + std::to_string(line_no) + " is not 'onset<TAB>offset'");
        if (!(onset > prev_onset))
            throw FormatError("events onsets must be strictly increasing at line " +
                              std::to_string(line_no));
        events.intervals.push_back({onset, offset});
        prev_onset = onset;
    }
    validate(events);
    return events;
}

void save_events(const EventTrack& events, const std::string& path) {
    validate(events);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open events file for writing: " + path);
    out << "# onset_s\toffset_s\n";
    char buf[64];
    for (const auto& iv : events.intervals) {
        std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\n", iv.onset_s, iv.offset_s);
        out << buf;
    }
    if (!out) throw IoError("failed writing events file: " + path);
}

Recording select_channels(const Recording& rec, ChannelKind kind) {
    validate(rec);
    Recording out;
    out.sample_rate_hz = rec.sample_rate_hz;
    for (size_t c = 0; c < rec.n_channels(); ++c) {
        if (rec.channels[c].kind == kind) {
            out.channels.push_back(rec.channels[c]);
            out.data.push_back(rec.data[c]);
        }
    }
    if (out.data.empty()) throw EmptySelectionError("no channels of the requested kind");
    return out;
}

Recording resample(const Recording& rec, double target_hz) {
    validate(rec);
    if (!(target_hz > 0.0)) throw std::invalid_argument("target rate must be positive");
    if (target_hz == rec.sample_rate_hz) return rec;

    const size_t n_in = rec.n_samples();
    const double ratio = target_hz / rec.sample_rate_hz;
    const auto n_out = static_cast<size_t>(std::llround(static_cast<double>(n_in) * ratio));
    if (n_out == 0) throw DegenerateError("resampling would produce zero samples");

    // Anti-alias moving average, applied only when decimating. Width
    // round(src/target); edges use the truncated window so constants are
    // preserved exactly.
    const long width = target_hz < rec.sample_rate_hz
                           ? std::lround(rec.sample_rate_hz / target_hz)
                           : 1;

    Recording out;
    out.sample_rate_hz = target_hz;
    out.channels = rec.channels;
    out.data.assign(rec.n_channels(), std::vector<float>(n_out));

    std::vector<double> smooth(n_in);
    const long half_lo = (width - 1) / 2;
    const long half_hi = width / 2;
    for (size_t c = 0; c < rec.n_channels(); ++c) {
        const auto& src = rec.data[c];
        if (width <= 1) {
            for (size_t i = 0; i < n_in; ++i) smooth[i] = src[i];
        } else {
            for (size_t i = 0; i < n_in; ++i) {
                const long lo = std::max<long>(0, static_cast<long>(i) - half_lo);
                const long hi = std::min<long>(static_cast<long>(n_in) - 1,
                                               static_cast<long>(i) + half_hi);
                double acc = 0.0;
                for (long j = lo; j <= hi; ++j) acc += src[static_cast<size_t>(j)];
                smooth[i] = acc / static_cast<double>(hi - lo + 1);
            }
        }
        auto& dst = out.data[c];
        for (size_t k = 0; k < n_out; ++k) {
            const double pos = static_cast<double>(k) / ratio;  // in source samples
            if (pos >= static_cast<double>(n_in - 1)) {
                dst[k] = static_cast<float>(smooth[n_in - 1]);
                continue;
            }
            const auto i0 = static_cast<size_t>(pos);
            const double frac = pos - static_cast<double>(i0);
            dst[k] = static_cast<float>(smooth[i0] * (1.0 - frac) + smooth[i0 + 1] * frac);
        }
    }
    return out;
}

Recording normalize_temporal(const Recording& rec) {
    validate(rec);
    if (rec.n_samples() < 2) throw std::invalid_argument("need at least two samples to normalize");

    Recording out = rec;
    const double n = static_cast<double>(rec.n_samples());
    for (auto& row : out.data) {
        double mean = 0.0;
        for (float x : row) mean += x;
        mean /= n;
        double var = 0.0;
        for (float x : row) {
            const double d = x - mean;
            var += d * d;
        }
        const double std_dev = std::sqrt(var / n);
        const double scale = 1.0 / (std_dev + 1e-8);
        for (auto& x : row) x = static_cast<float>((x - mean) * scale);
    }
    return out;
}

LabelVector rasterize_labels(const EventTrack& events, double frame_rate_hz, size_t n_frames) {
    validate(events);
    if (!(frame_rate_hz > 0.0)) throw std::invalid_argument("frame rate must be positive");
    if (n_frames < 1) throw std::invalid_argument("need at least one frame");

    LabelVector labels;
    labels.frame_rate_hz = frame_rate_hz;
    labels.values.assign(n_frames, 0);
    for (const auto& iv : events.intervals) {
        // Frame centers are (k + 0.5)/rate; membership is center in [onset, offset).
        auto first = static_cast<long>(std::ceil(iv.onset_s * frame_rate_hz - 0.5));
        auto last = static_cast<long>(std::ceil(iv.offset_s * frame_rate_hz - 0.5)) - 1;
        first = std::max<long>(first, 0);
        last = std::min<long>(last, static_cast<long>(n_frames) - 1);
        for (long k = first; k <= last; ++k) {
            const double center = (static_cast<double>(k) + 0.5) / frame_rate_hz;
            if (center >= iv.onset_s && center < iv.offset_s) labels.values[static_cast<size_t>(k)] = 1;
        }
    }
    return labels;
}

}  // namespace mebm
