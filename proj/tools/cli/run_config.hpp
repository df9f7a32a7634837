#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "rulforge/dataset.hpp"
#include "rulforge/evaluate.hpp"
#include "rulforge/model.hpp"
#include "rulforge/train.hpp"

namespace rulforge::cli {

enum class PreprocessingMode { FullSequence, Windowed };

std::string_view to_string(PreprocessingMode mode);
PreprocessingMode parse_preprocessing_mode(std::string_view text);

/// Everything one experiment needs. Parsed from a JSON document; see
/// docs/run_config.md for the field list.
struct RunConfig {
  SubsetId subset = SubsetId::SYNTH;
  std::optional<std::filesystem::path> data_root;
  /// Used for subset SYNTH when no data root is given.
  std::optional<SynthConfig> synth;

  PreprocessingMode preprocessing = PreprocessingMode::FullSequence;
  std::size_t window = 31;
  bool include_settings = true;

  std::string preset = "paper-4block";
  /// Field overrides applied on top of the preset (in_features is always
  /// taken from the fitted normaliser).
  nlohmann::json model_overrides = nlohmann::json::object();

  TrainConfig train;
  EvalOptions eval;

  std::filesystem::path output_dir;
  int n_runs = 1;

  /// Architecture for `in_features` inputs.
  TcnConfig model_config(int in_features) const;
  nlohmann::json to_json() const;
};

/// Throws ValidationError naming the offending field path, e.g.
/// "config: train.learning_rate: expected a number".
RunConfig parse_run_config(const nlohmann::json& j, bool require_output_dir = true);
RunConfig load_run_config(const std::filesystem::path& path, bool require_output_dir = true);

SynthConfig parse_synth_config(const nlohmann::json& j, const std::string& path = "synth");
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

}  // namespace rulforge::cli
