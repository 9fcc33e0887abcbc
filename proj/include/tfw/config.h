#pragma once
// JSON run configuration: strict parsing (unknown keys are errors), label
// presets, model/train/pretrain blocks, and a stable config hash for run
// metadata.
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfw/models.h"
#include "tfw/synth.h"
#include "tfw/train.h"

namespace tfw {

struct RunConfig {
    std::string dataset;               // manifest CSV or dataset root directory
    std::string out;                   // output directory (may be overridden by --out)
    std::string params;                // checkpoint path, used by `eval`
    std::vector<std::string> labels;   // resolved label set
    std::string label_preset = "ned12";  // ned12 | ned16 | custom
    ModelSpec model;
    TrainConfig train;
    PretrainSpec pretrain;
    int64_t folds = 5;
    double holdout_fraction = 0.1;  // `train` subcommand's patient-wise test share
    uint64_t seed = 1;
};

// Parse a JSON file; I/O or syntax failure => ConfigError.
nlohmann::json load_json_file(const std::string& path);

// Strict converters: any key outside the schema => ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
SyntheticSpec synth_spec_from_json(const nlohmann::json& j);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json model_spec_to_json(const ModelSpec& spec);

// FNV-1a 64 over the canonical (key-sorted) dump; any change to the
// effective configuration changes the hash.
uint64_t config_hash(const nlohmann::json& j);

}  // namespace tfw
