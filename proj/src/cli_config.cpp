#include "mebm/cli_config.hpp"

#include <fstream>
#include <sstream>

namespace mebm::cli {

namespace {

const std::map<std::string, std::string>& default_values() {
    static const std::map<std::string, std::string> defaults = {
        // run
        {"seed", "0"},
        {"out", "."},
        // paths
        {"rec", ""},
        {"events", ""},
        {"val_rec", ""},
        {"val_events", ""},
        {"ckpt", ""},
        {"store", ""},
        {"pred", ""},
        {"truth", ""},
        {"checkpoint_label", "-"},
        // model
        {"c_in", "204"},
        {"d", "128"},
        {"n_bm", "5"},
        {"n_ms", "12"},
        {"ms_kernels", "3,5,7,9"},
        {"lstm_hidden", "960"},
        {"dropout", "0.01"},
        {"pool_window", "31"},
        {"pool_stride", "15"},
        {"bm_on", "1"},
        {"ms_on", "1"},
        {"lstm_on", "1"},
        // windowing
        {"window_s", "12"},
        {"step_s", "6"},
        {"frame_rate_hz", "100"},
        {"jitter_frames", "2"},
        // training
        {"epochs", "10"},
        {"batch_size", "8"},
        {"lr", "0.001"},
        {"beta1", "0.9"},
        {"beta2", "0.999"},
        {"adam_eps", "1e-8"},
        {"weight_decay", "0.01"},
        {"store_capacity", "5"},
        // synth
        {"n_channels", "8"},
        {"n_informative", "4"},
        {"duration_s", "120"},
        {"sample_rate_hz", "250"},
        {"snr", "2.0"},
        {"speech_min_s", "0.5"},
        {"speech_max_s", "4.0"},
        {"silence_min_s", "0.3"},
        {"silence_max_s", "2.0"},
        // inference / evaluation
        {"rate", "0"},
        {"threshold", ""},
    };
    return defaults;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

void RunConfig::set_checked(const std::string& key, const std::string& value,
                            const std::string& origin) {
    if (!values_.count(key)) throw ConfigError("unknown configuration key '" + key + "' " + origin);
    values_[key] = value;
    explicit_[key] = true;
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + " is not 'key = value'");
        set_checked(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)),
                    "in " + path + ":" + std::to_string(line_no));
    }
}

void RunConfig::apply_flag(const std::string& key, const std::string& value) {
    set_checked(key, value, "on the command line");
}

bool RunConfig::is_set(const std::string& key) const {
    auto it = explicit_.find(key);
    if (it != explicit_.end() && it->second) return true;
    return !get(key).empty();
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second;
}

double RunConfig::get_num(const std::string& key) const {
    const std::string& s = get(key);
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not a number: '" + s + "'");
    }
}

int64_t RunConfig::get_int(const std::string& key) const {
    const std::string& s = get(key);
    try {
        size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not an integer: '" + s + "'");
    }
}

uint64_t RunConfig::get_u64(const std::string& key) const {
    const int64_t v = get_int(key);
    if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
    return static_cast<uint64_t>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "1" || s == "true" || s == "on") return true;
    if (s == "0" || s == "false" || s == "off") return false;
    throw ConfigError("key '" + key + "' is not a boolean: '" + s + "'");
}

ModelConfig RunConfig::model_config() const {
    ModelConfig cfg;
    cfg.c_in = get_u64("c_in");
    cfg.d = get_u64("d");
    cfg.n_bm = get_u64("n_bm");
    cfg.n_ms = get_u64("n_ms");
    cfg.lstm_hidden = get_u64("lstm_hidden");
    cfg.dropout_p = get_num("dropout");
    cfg.pool_window = get_u64("pool_window");
    cfg.pool_stride = get_u64("pool_stride");
    cfg.bm_on = get_bool("bm_on");
    cfg.ms_on = get_bool("ms_on");
    cfg.lstm_on = get_bool("lstm_on");
    cfg.ms_kernel_sizes.clear();
    std::stringstream ks(get("ms_kernels"));
    std::string item;
    while (std::getline(ks, item, ',')) {
        try {
            cfg.ms_kernel_sizes.push_back(static_cast<size_t>(std::stoull(trim(item))));
        } catch (const std::exception&) {
            throw ConfigError("ms_kernels must be a comma-separated list of integers");
        }
    }
    validate(cfg);
    return cfg;
}

WindowingConfig RunConfig::windowing_config() const {
    WindowingConfig cfg;
    cfg.window_s = get_num("window_s");
    cfg.step_s = get_num("step_s");
    cfg.frame_rate_hz = get_num("frame_rate_hz");
    cfg.jitter_frames = get_u64("jitter_frames");
    validate(cfg);
    return cfg;
}

SynthConfig RunConfig::synth_config() const {
    SynthConfig cfg;
    cfg.n_channels = get_u64("n_channels");
    cfg.n_informative = get_u64("n_informative");
    cfg.duration_s = get_num("duration_s");
    cfg.sample_rate_hz = get_num("sample_rate_hz");
    cfg.snr = get_num("snr");
    cfg.speech_dur_min_s = get_num("speech_min_s");
    cfg.speech_dur_max_s = get_num("speech_max_s");
    cfg.silence_dur_min_s = get_num("silence_min_s");
    cfg.silence_dur_max_s = get_num("silence_max_s");
    cfg.seed = get_u64("seed");
    validate(cfg);
    return cfg;
}

mebm::RunConfig RunConfig::train_config() const {
    mebm::RunConfig run;
    run.epochs = get_u64("epochs");
    run.batch_size = get_u64("batch_size");
    run.seed = get_u64("seed");
    run.checkpoint_dir = get("out");
    run.store_capacity = get_u64("store_capacity");
    run.optimizer.lr = get_num("lr");
    run.optimizer.beta1 = get_num("beta1");
    run.optimizer.beta2 = get_num("beta2");
    run.optimizer.epsilon = get_num("adam_eps");
    run.optimizer.weight_decay = get_num("weight_decay");
    return run;
}

std::vector<std::string> RunConfig::dump() const {
    std::vector<std::string> lines;
    lines.reserve(values_.size());
    for (const auto& [key, value] : values_) lines.push_back(key + "=" + value);
    return lines;
}

}  // namespace mebm::cli
