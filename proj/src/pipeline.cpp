#include "mebm/pipeline.hpp"

namespace mebm {

Recording preprocess_session(const Recording& raw, double frame_rate_hz) {
    return normalize_temporal(resample(select_channels(raw, ChannelKind::grad), frame_rate_hz));
}

std::vector<TrainingWindow> windowed_session(const Recording& prepped, const EventTrack& events,
                                             const WindowingConfig& wcfg,
                                             const std::string& session_id) {
    Rng unused(0);  // evaluation-mode extraction draws nothing
    auto windows = extract_windows(prepped, events, wcfg, unused, /*training=*/false, session_id);
    for (auto& w : windows) w = normalize_segment(w);
    return windows;
}

TrainingSet make_training_set(const Recording& prepped, const EventTrack& events,
                              const WindowingConfig& wcfg, const std::string& session_id) {
    TrainingSet set;
    set.windows = windowed_session(prepped, events, wcfg, session_id);
    set.events = events;
    set.wcfg = wcfg;
    set.session_frames = prepped.n_samples();
    return set;
}

EvalSession make_eval_session(const Recording& prepped, const EventTrack& events,
                              const WindowingConfig& wcfg, const std::string& session_id) {
    EvalSession session;
    session.windows = windowed_session(prepped, events, wcfg, session_id);
    session.n_frames = prepped.n_samples();
    session.truth = rasterize_labels(events, wcfg.frame_rate_hz, session.n_frames);
    return session;
}

}  // namespace mebm
