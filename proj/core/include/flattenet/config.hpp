#pragma once

// JSON model configs: a flattening-module spec plus predictor settings.
// Parsing is strict; unknown keys are rejected so typos surface as errors
// instead of silently falling back to defaults.

#include "flattenet/flatten_head.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace flattenet {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PredictorMode {
    AffineAfterR,  // predict per pixel on the rearranged map
    FoldedBeforeR, // predict all s2*s2 offsets at once, rearrange after
};

struct ModelConfig {
    std::string name;
    FlatteningModuleSpec module;
    std::int64_t classes = 1;
    PredictorMode predictor_mode = PredictorMode::AffineAfterR;
};

// Parse config JSON (schema: layers[{k,s,g1,g2,g3,expand,prelu}], s2,
// rearrange, perm_seed?, predictor{classes, mode}). Throws ConfigError.
ModelConfig parse_config(const std::string& json_text, const std::string& name = "config");

// Read and parse a config file. Throws ConfigError on IO or parse failure.
ModelConfig load_config(const std::string& path);

// Serialize back to the schema accepted by parse_config.
std::string config_json(const ModelConfig& cfg);

// The presets shipped under configs/. Tests pin the files to these.
const std::vector<ModelConfig>& builtin_configs();
const ModelConfig* find_builtin(const std::string& name);

} // namespace flattenet
