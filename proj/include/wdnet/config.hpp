#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wdnet/datagen.hpp"
#include "wdnet/model.hpp"
#include "wdnet/trainer.hpp"

namespace wdnet {

/// Everything a run needs, read from a key=value file. Keys are grouped by
/// prefix: model.*, loss.*, train.*, synth.*, data.*. Lines starting with
/// '#' and blank lines are ignored; unknown keys are errors.
struct RunConfig {
    WDNetConfig model;
    TrainConfig train;
    SynthConfig synth;
    LoadOptions load;
    /// Default dataset directory for train/eval when --data is not given.
    std::string data_dir;

    void validate() const;
};

struct ConfigKey {
    std::string key;
    std::string default_value;
    std::string doc;
};

/// Every accepted key with its default and a one-line description.
std::vector<ConfigKey> run_config_keys();

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Full listing of `cfg`, every key, in documentation order.
std::string to_text(const RunConfig& cfg, bool with_docs = false);

}  // namespace wdnet
