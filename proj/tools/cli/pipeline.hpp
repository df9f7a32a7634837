#pragma once

#include <cstdint>
#include <vector>

#include "cli/run_config.hpp"
#include "rulforge/evaluate.hpp"
#include "rulforge/model.hpp"
#include "rulforge/preprocess.hpp"
#include "rulforge/train.hpp"

namespace rulforge::cli {

/// Loads the subset from cfg.data_root, or generates it from the synth block
/// when the subset is SYNTH and no root is set.
DatasetBundle load_data(const RunConfig& cfg);

struct PreparedData {
  NormStats stats;
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> val;
  /// Training samples over all training engines, before the validation split.
  std::size_t n_train_samples = 0;
};

/// Normaliser fit, labelling, engine-level split and (windowed mode)
/// segmentation.
PreparedData prepare_data(const RunConfig& cfg, const DatasetBundle& bundle,
                          std::uint64_t seed);

/// Train settings with the mode-dependent fields (trim, supervision, seed)
/// filled in.
TrainConfig effective_train_config(const RunConfig& cfg, std::uint64_t seed);
EvalOptions effective_eval_options(const RunConfig& cfg);

struct RunResult {
  Model model;
  NormStats stats;
  TrainReport report;
  MetricsReport metrics;
  std::size_t n_train_samples = 0;
};

/// One complete train + test evaluation.
RunResult run_once(const RunConfig& cfg, const DatasetBundle& bundle, std::uint64_t seed,
                   const EpochCallback& on_epoch = {});

/// Optimizer-step budget shared by both ablation modes: train.max_steps if
/// set, otherwise max_epochs full-sequence epochs over the training split.
std::size_t ablation_step_budget(const RunConfig& cfg, const DatasetBundle& bundle);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
};
MeanSd mean_sd(const std::vector<double>& values);

}  // namespace rulforge::cli
