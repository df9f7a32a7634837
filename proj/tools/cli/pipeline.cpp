#include "cli/pipeline.hpp"

#include <cmath>
#include <numeric>

#include "rulforge/error.hpp"

namespace rulforge::cli {

DatasetBundle load_data(const RunConfig& cfg) {
  if (cfg.data_root) return load_subset(*cfg.data_root, cfg.subset);
  if (cfg.subset == SubsetId::SYNTH) return generate_synthetic(cfg.synth.value_or(SynthConfig{}));
  throw ValidationError("no data root for subset " + std::string(to_string(cfg.subset)) +
                        " (set data_root, --data-root or RULFORGE_DATA)");
}

PreparedData prepare_data(const RunConfig& cfg, const DatasetBundle& bundle,
                          std::uint64_t seed) {
  PreparedData d;
  NormalizerOptions nopts;
  nopts.include_settings = cfg.include_settings;
  d.stats = fit_normalizer(bundle.train, nopts);

  std::vector<LabeledSequence> seqs;
  seqs.reserve(bundle.train.size());
  for (const auto& t : bundle.train) seqs.push_back(make_labeled_sequence(d.stats, t));
  auto [train, val] = split_train_val(seqs, cfg.train.val_fraction, seed);

  if (cfg.preprocessing == PreprocessingMode::FullSequence) {
    d.n_train_samples = seqs.size();
    d.train = std::move(train);
    d.val = std::move(val);
    return d;
  }
  auto windows_of = [&](const std::vector<LabeledSequence>& in) {
    std::vector<LabeledSequence> out;
    for (const auto& s : in) {
      auto w = window_segment(s, cfg.window);
      std::move(w.begin(), w.end(), std::back_inserter(out));
    }
    return out;
  };
  for (const auto& s : seqs) {
    d.n_train_samples += s.length() >= cfg.window ? s.length() - cfg.window + 1 : 1;
  }
  d.train = windows_of(train);
  d.val = windows_of(val);
  return d;
}

TrainConfig effective_train_config(const RunConfig& cfg, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  if (cfg.preprocessing == PreprocessingMode::Windowed) {
    t.trim = false;
    t.supervision = Supervision::LastStep;
  }
  return t;
}

EvalOptions effective_eval_options(const RunConfig& cfg) {
  EvalOptions e = cfg.eval;
  if (cfg.preprocessing == PreprocessingMode::Windowed) e.window = cfg.window;
  return e;
}

RunResult run_once(const RunConfig& cfg, const DatasetBundle& bundle, std::uint64_t seed,
                   const EpochCallback& on_epoch) {
  auto data = prepare_data(cfg, bundle, seed);
  Rng init_rng(mix64(seed ^ 0x696e6974ULL));
  Model model(cfg.model_config(static_cast<int>(data.stats.retained_count())), init_rng);
  auto report = train(model, data.train, data.val, effective_train_config(cfg, seed), on_epoch);
  auto metrics = evaluate_test(model, bundle, data.stats, effective_eval_options(cfg));
  return RunResult{std::move(model), std::move(data.stats), std::move(report),
                   std::move(metrics), data.n_train_samples};
}

std::size_t ablation_step_budget(const RunConfig& cfg, const DatasetBundle& bundle) {
  if (cfg.train.max_steps) return *cfg.train.max_steps;
  const auto split = split_indices(bundle.train.size(), cfg.train.val_fraction, cfg.train.seed);
  const std::size_t bs = cfg.train.batch_size;
  return cfg.train.max_epochs * ((split.train.size() + bs - 1) / bs);
}

MeanSd mean_sd(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("mean_sd: no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, values.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0};
}

}  // namespace rulforge::cli
