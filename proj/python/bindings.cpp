#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mebm/eval.hpp"
#include "mebm/pipeline.hpp"
#include "mebm/synth.hpp"

namespace py = pybind11;
using namespace mebm;

namespace {

Mat mat_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array (channels x time)");
    Mat m(static_cast<size_t>(a.shape(0)), static_cast<size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.v.begin());
    return m;
}

py::array_t<float> recording_data(const Recording& rec) {
    py::array_t<float> a({rec.n_channels(), rec.n_samples()});
    float* out = a.mutable_data();
    for (const auto& row : rec.data) out = std::copy(row.begin(), row.end(), out);
    return a;
}

Recording make_recording(const py::array_t<float, py::array::c_style | py::array::forcecast>& data,
                         double sample_rate_hz, const std::vector<std::string>& names,
                         const std::vector<int>& kinds) {
    if (data.ndim() != 2) throw std::invalid_argument("data must be 2-D (channels x samples)");
    const auto n_ch = static_cast<size_t>(data.shape(0));
    const auto n_s = static_cast<size_t>(data.shape(1));
    Recording rec;
    rec.sample_rate_hz = sample_rate_hz;
    rec.channels.resize(n_ch);
    for (size_t c = 0; c < n_ch; ++c) {
        rec.channels[c].name = c < names.size() ? names[c] : "CH" + std::to_string(c);
        const int kind = c < kinds.size() ? kinds[c] : 0;
        if (kind < 0 || kind > 2) throw std::invalid_argument("channel kind must be 0, 1 or 2");
        rec.channels[c].kind = static_cast<ChannelKind>(kind);
    }
    rec.data.assign(n_ch, std::vector<float>(n_s));
    const float* src = data.data();
    for (size_t c = 0; c < n_ch; ++c, src += n_s) rec.data[c].assign(src, src + n_s);
    validate(rec);
    return rec;
}

LabelVector labels_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a,
                              double rate) {
    LabelVector y;
    y.frame_rate_hz = rate;
    y.values.assign(a.data(), a.data() + a.size());
    return y;
}

py::array_t<uint8_t> array_from_labels(const LabelVector& y) {
    py::array_t<uint8_t> a(static_cast<py::ssize_t>(y.values.size()));
    std::copy(y.values.begin(), y.values.end(), a.mutable_data());
    return a;
}

ProbabilitySequence probs_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a, double rate) {
    ProbabilitySequence p;
    p.frame_rate_hz = rate;
    p.values.assign(a.data(), a.data() + a.size());
    return p;
}

py::array_t<double> array_from_probs(const ProbabilitySequence& p) {
    py::array_t<double> a(static_cast<py::ssize_t>(p.values.size()));
    std::copy(p.values.begin(), p.values.end(), a.mutable_data());
    return a;
}

EventTrack events_from_list(const std::vector<std::pair<double, double>>& intervals) {
    EventTrack events;
    for (const auto& [on, off] : intervals) events.intervals.push_back({on, off});
    validate(events);
    return events;
}

std::vector<std::pair<double, double>> events_to_list(const EventTrack& events) {
    std::vector<std::pair<double, double>> out;
    for (const auto& iv : events.intervals) out.emplace_back(iv.onset_s, iv.offset_s);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Speech-activity decoding from MEG-like recordings";

    py::class_<Recording>(m, "Recording")
        .def(py::init(&make_recording), py::arg("data"), py::arg("sample_rate_hz"),
             py::arg("names") = std::vector<std::string>{},
             py::arg("kinds") = std::vector<int>{})
        .def_readonly("sample_rate_hz", &Recording::sample_rate_hz)
        .def_property_readonly("data", &recording_data)
        .def_property_readonly("channel_names",
                               [](const Recording& r) {
                                   std::vector<std::string> names;
                                   for (const auto& ch : r.channels) names.push_back(ch.name);
                                   return names;
                               })
        .def_property_readonly("channel_kinds",
                               [](const Recording& r) {
                                   std::vector<int> kinds;
                                   for (const auto& ch : r.channels)
                                       kinds.push_back(static_cast<int>(ch.kind));
                                   return kinds;
                               })
        .def_property_readonly("n_channels", &Recording::n_channels)
        .def_property_readonly("n_samples", &Recording::n_samples);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("c_in", &ModelConfig::c_in)
        .def_readwrite("d", &ModelConfig::d)
        .def_readwrite("n_bm", &ModelConfig::n_bm)
        .def_readwrite("n_ms", &ModelConfig::n_ms)
        .def_readwrite("ms_kernel_sizes", &ModelConfig::ms_kernel_sizes)
        .def_readwrite("lstm_hidden", &ModelConfig::lstm_hidden)
        .def_readwrite("dropout_p", &ModelConfig::dropout_p)
        .def_readwrite("pool_window", &ModelConfig::pool_window)
        .def_readwrite("pool_stride", &ModelConfig::pool_stride)
        .def_readwrite("bm_on", &ModelConfig::bm_on)
        .def_readwrite("ms_on", &ModelConfig::ms_on)
        .def_readwrite("lstm_on", &ModelConfig::lstm_on);

    py::class_<ModelParams>(m, "ModelParams")
        .def_property_readonly("names",
                               [](const ModelParams& p) {
                                   std::vector<std::string> names;
                                   for (const auto& t : p.tensors) names.push_back(t.name);
                                   return names;
                               })
        .def("total_size", &ModelParams::total_size);

    py::class_<SynthConfig>(m, "SynthConfig")
        .def(py::init<>())
        .def_readwrite("n_channels", &SynthConfig::n_channels)
        .def_readwrite("n_informative", &SynthConfig::n_informative)
        .def_readwrite("duration_s", &SynthConfig::duration_s)
        .def_readwrite("sample_rate_hz", &SynthConfig::sample_rate_hz)
        .def_readwrite("snr", &SynthConfig::snr)
        .def_readwrite("seed", &SynthConfig::seed);

    // data model
    m.def("load_recording", &load_recording, py::arg("path"));
    m.def("save_recording", &save_recording, py::arg("recording"), py::arg("path"));
    m.def("load_events",
          [](const std::string& path) { return events_to_list(load_events(path)); },
          py::arg("path"));
    m.def("save_events",
          [](const std::vector<std::pair<double, double>>& intervals, const std::string& path) {
              save_events(events_from_list(intervals), path);
          },
          py::arg("intervals"), py::arg("path"));
    m.def("select_grad_channels",
          [](const Recording& rec) { return select_channels(rec, ChannelKind::grad); });
    m.def("resample", &resample, py::arg("recording"), py::arg("target_hz"));
    m.def("normalize_temporal", &normalize_temporal, py::arg("recording"));
    m.def("preprocess_session", &preprocess_session, py::arg("recording"),
          py::arg("frame_rate_hz") = 100.0);
    m.def("rasterize_labels",
          [](const std::vector<std::pair<double, double>>& intervals, double rate, size_t n) {
              return array_from_labels(rasterize_labels(events_from_list(intervals), rate, n));
          },
          py::arg("intervals"), py::arg("frame_rate_hz"), py::arg("n_frames"));

    // synth
    m.def("generate_session",
          [](const SynthConfig& cfg) {
              auto [rec, events] = generate_session(cfg);
              return py::make_tuple(rec, events_to_list(events));
          },
          py::arg("config"));

    // network
    m.def("count_params", &count_params, py::arg("config"));
    m.def("init_params", &init_params, py::arg("config"), py::arg("seed"));
    m.def("model_forward",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
             const ModelParams& params, const ModelConfig& cfg, double frame_rate_hz) {
              ForwardOptions opts;
              opts.frame_rate_hz = frame_rate_hz;
              return array_from_probs(model_forward(mat_from_array(x), params, cfg, opts));
          },
          py::arg("x"), py::arg("params"), py::arg("config"), py::arg("frame_rate_hz") = 100.0);
    m.def("save_checkpoint",
          [](const std::string& path, const ModelConfig& cfg, const ModelParams& params,
             uint32_t epoch, double validation_loss) {
              save_checkpoint(path, {cfg, params, epoch, validation_loss});
          },
          py::arg("path"), py::arg("config"), py::arg("params"), py::arg("epoch") = 0,
          py::arg("validation_loss") = 0.0);
    m.def("load_checkpoint",
          [](const std::string& path) {
              Checkpoint ckpt = load_checkpoint(path);
              return py::make_tuple(ckpt.cfg, ckpt.params, ckpt.epoch, ckpt.validation_loss);
          },
          py::arg("path"));

    // metrics and thresholding
    m.def("mse_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
             const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& y) {
              return mse_loss(probs_from_array(p, 100.0), labels_from_array(y, 100.0));
          },
          py::arg("probs"), py::arg("labels"));
    m.def("apply_threshold",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p, double tau) {
              return array_from_labels(apply_threshold(probs_from_array(p, 100.0), tau));
          },
          py::arg("probs"), py::arg("tau"));
    m.def("f1_macro",
          [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& pred,
             const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& truth) {
              return f1_macro(labels_from_array(pred, 100.0), labels_from_array(truth, 100.0));
          },
          py::arg("pred"), py::arg("truth"));
    m.def("acc_macro",
          [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& pred,
             const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& truth) {
              return acc_macro(labels_from_array(pred, 100.0), labels_from_array(truth, 100.0));
          },
          py::arg("pred"), py::arg("truth"));
    m.def("sweep_thresholds",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
             const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& truth) {
              std::vector<std::pair<double, double>> out;
              for (const auto& pt :
                   sweep_thresholds(probs_from_array(p, 100.0), labels_from_array(truth, 100.0)))
                  out.emplace_back(pt.tau, pt.f1);
              return out;
          },
          py::arg("probs"), py::arg("truth"));
    m.def("merge_overlaps",
          [](const std::vector<std::pair<size_t, py::array_t<double>>>& windows,
             size_t session_len, double rate) {
              std::vector<std::pair<size_t, ProbabilitySequence>> converted;
              for (const auto& [start, arr] : windows)
                  converted.emplace_back(start, probs_from_array(arr, rate));
              return array_from_probs(merge_overlaps(converted, session_len));
          },
          py::arg("windows"), py::arg("session_len"), py::arg("rate") = 100.0);
    m.def("resample_probs",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
             double src_hz, double target_hz) {
              return array_from_probs(resample_probs(probs_from_array(p, src_hz), target_hz));
          },
          py::arg("probs"), py::arg("src_hz"), py::arg("target_hz"));
}
