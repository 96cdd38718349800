#pragma once

#include <filesystem>
#include <string>

#include "recdan/data.hpp"
#include "recdan/models.hpp"
#include "recdan/synth.hpp"
#include "recdan/training.hpp"

namespace recdan {

/// Everything a run needs besides file paths.
struct RunConfig {
  training::TrainConfig train;
  models::ModelConfig model;  // vocab_size is filled from the data
  data::AssembleOptions assemble;
  data::SynthConfig synth;
};

/// Applies one setting. Keys are the field names of TrainConfig, ModelConfig
/// and AssembleOptions ("lr", "hidden_dim", "min_count", ...), plus
/// "synth.<field>" for the generator. Unknown keys throw ConfigError.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Flat UTF-8 "key = value" file; '#' starts a comment. Errors name the line.
void load_config_file(RunConfig& config, const std::filesystem::path& path);

/// Scaled-down settings that train in seconds on one core: small widths,
/// short texts, a learning-rate multiplier of 1 and a 2,000-interaction
/// synthetic pair.
RunConfig desk_config();

}  // namespace recdan
