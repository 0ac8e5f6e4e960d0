#pragma once

#include <string>
#include <vector>

#include "mebm/data_model.hpp"
#include "mebm/eval.hpp"
#include "mebm/train.hpp"
#include "mebm/windowing.hpp"

namespace mebm {

// Session-level preprocessing: keep grad channels, resample to the frame
// rate, z-score each channel over the session.
Recording preprocess_session(const Recording& raw, double frame_rate_hz);

// Windowed, segment-normalized views of a preprocessed session. Labels are
// unjittered; training re-jitters per epoch.
std::vector<TrainingWindow> windowed_session(const Recording& prepped, const EventTrack& events,
                                             const WindowingConfig& wcfg,
                                             const std::string& session_id = "");

TrainingSet make_training_set(const Recording& prepped, const EventTrack& events,
                              const WindowingConfig& wcfg, const std::string& session_id = "");

EvalSession make_eval_session(const Recording& prepped, const EventTrack& events,
                              const WindowingConfig& wcfg, const std::string& session_id = "");

}  // namespace mebm
