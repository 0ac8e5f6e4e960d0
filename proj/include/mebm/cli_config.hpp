#pragma once

#include <map>
#include <string>
#include <vector>

#include "mebm/net.hpp"
#include "mebm/synth.hpp"
#include "mebm/train.hpp"
#include "mebm/windowing.hpp"

namespace mebm::cli {

// Flat key=value run configuration with three layers of precedence:
// built-in defaults < config file < command-line flags. Unknown keys are
// rejected at every layer.
class RunConfig {
public:
    RunConfig();

    // '#' comments and blank lines ignored; "key = value" per line.
    void apply_file(const std::string& path);
    // Flags of the form --key value (or --key=value).
    void apply_flag(const std::string& key, const std::string& value);

    bool is_set(const std::string& key) const;  // set beyond the default
    const std::string& get(const std::string& key) const;
    double get_num(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    ModelConfig model_config() const;
    WindowingConfig windowing_config() const;
    SynthConfig synth_config() const;
    mebm::RunConfig train_config() const;  // checkpoint_dir from "out"

    // Sorted key=value lines of the fully resolved configuration.
    std::vector<std::string> dump() const;

private:
    void set_checked(const std::string& key, const std::string& value, const std::string& origin);

    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

}  // namespace mebm::cli
