#include "cli/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli/pipeline.hpp"
#include "cli/svg_plot.hpp"
#include "rulforge/checkpoint.hpp"
#include "rulforge/error.hpp"

namespace rulforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CorruptionError*>(&e)) return kExitIntegrity;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const NotFoundError*>(&e) || dynamic_cast<const IntegrityError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e)) {
    return kExitInput;
  }
  return kExitInternal;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot write " + path.string());
  f << text;
}

std::string run_dir_name(int i) { return "run_" + std::to_string(i); }

std::string feature_name(std::size_t i) {
  if (i < kNumSettings) return "setting" + std::to_string(i + 1);
  const std::size_t s = i - kNumSettings;
  return std::string(sensor_table()[s].symbol) + " (sensor " + std::to_string(s + 1) + ")";
}

struct LengthStats {
  std::size_t min = 0, max = 0;
  double mean = 0.0;
};

template <typename Range, typename Fn>
LengthStats length_stats(const Range& items, Fn&& len) {
  LengthStats s;
  if (items.empty()) return s;
  s.min = len(items.front());
  double sum = 0.0;
  for (const auto& it : items) {
    const std::size_t n = len(it);
    s.min = std::min(s.min, n);
    s.max = std::max(s.max, n);
    sum += static_cast<double>(n);
  }
  s.mean = sum / static_cast<double>(items.size());
  return s;
}

std::ostream& operator<<(std::ostream& os, const LengthStats& s) {
  return os << "min " << s.min << ", mean " << std::fixed << std::setprecision(1) << s.mean
            << std::defaultfloat << ", max " << s.max;
}

}  // namespace

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.subset) cfg.subset = parse_subset_id(*o.subset);
  if (o.data_root) cfg.data_root = *o.data_root;
  if (o.out) cfg.output_dir = *o.out;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.runs) {
    if (*o.runs < 1) throw ValidationError("--runs must be >= 1");
    cfg.n_runs = *o.runs;
  }
  if (o.preset) {
    cfg.preset = *o.preset;
    (void)cfg.model_config(1);
  }
  if (!cfg.data_root && !(cfg.subset == SubsetId::SYNTH && cfg.synth)) {
    if (const char* env = std::getenv("RULFORGE_DATA"); env && *env) cfg.data_root = env;
  }
}

RunConfig resolve_run_config(const fs::path& config_path, const Overrides& o) {
  RunConfig cfg = load_run_config(config_path, !o.out.has_value());
  apply_overrides(cfg, o);
  if (cfg.output_dir.empty()) throw ValidationError("config: missing required field 'output_dir'");
  return cfg;
}

void cmd_inspect(const fs::path& data_root, SubsetId subset, std::ostream& out) {
  const DatasetBundle b = load_subset(data_root, subset);
  out << "subset " << to_string(subset) << ": " << b.train.size() << " train / "
      << b.test.size() << " test\n";
  auto traj_len = [](const EngineTrajectory& t) { return t.length(); };
  out << "train length: " << length_stats(b.train, traj_len) << '\n';
  out << "test length:  " << length_stats(b.test, traj_len) << '\n';
  out << "test RUL:     "
      << length_stats(b.test_rul, [](int v) { return static_cast<std::size_t>(v); }) << '\n';

  const NormStats stats = fit_normalizer(b.train);
  std::vector<std::string> constant;
  for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
    if (!stats.retained_mask[i]) constant.push_back(feature_name(i));
  }
  out << "constant features (std < " << stats.epsilon_const << "): ";
  if (constant.empty()) out << "none";
  for (std::size_t i = 0; i < constant.size(); ++i) out << (i ? ", " : "") << constant[i];
  out << "\nretained features: " << stats.retained_count() << " of " << kNumRawFeatures << '\n';
  for (const auto& w : b.warnings) out << "warning: " << w << '\n';
}

json cmd_train(const RunConfig& cfg, std::ostream& log) {
  const DatasetBundle bundle = load_data(cfg);
  for (const auto& w : bundle.warnings) log << "warning: " << w << '\n';
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "run_config.json", cfg.to_json().dump(2) + "\n");

  std::vector<double> rmses, scores;
  json runs = json::array();
  for (int i = 0; i < cfg.n_runs; ++i) {
    const std::uint64_t seed = cfg.train.seed + static_cast<std::uint64_t>(i);
    const fs::path dir = cfg.output_dir / run_dir_name(i);
    fs::create_directories(dir);

    std::ofstream epoch_log(dir / "epoch_log.csv", std::ios::binary);
    epoch_log << "epoch,train_loss,val_loss,seconds\n";
    auto on_epoch = [&](const EpochStats& s) {
      epoch_log << s.epoch << ',' << s.train_loss << ',' << s.val_loss << ',' << s.seconds
                << '\n';
      epoch_log.flush();
    };
    log << "run " << i << " (seed " << seed << ")...\n";
    RunResult r = run_once(cfg, bundle, seed, on_epoch);

    save_checkpoint(r.model, dir / "checkpoint.rfck");
    r.stats.save(dir / "norm_stats.json");
    write_text(dir / "train_report.json", r.report.to_json() + "\n");
    write_text(dir / "metrics.json", r.metrics.to_json() + "\n");

    log << "run " << i << ": epochs " << r.report.epochs_run << ", best " << r.report.best_epoch
        << ", test RMSE " << r.metrics.rmse << ", score " << r.metrics.score << '\n';
    rmses.push_back(r.metrics.rmse);
    scores.push_back(r.metrics.score);
    runs.push_back({{"run", i},
                    {"seed", seed},
                    {"rmse", r.metrics.rmse},
                    {"score", r.metrics.score},
                    {"epochs_run", r.report.epochs_run},
                    {"best_epoch", r.report.best_epoch}});
  }

  const auto rm = mean_sd(rmses);
  const auto sc = mean_sd(scores);
  json agg;
  agg["subset_id"] = std::string(to_string(cfg.subset));
  agg["preprocessing"] = std::string(to_string(cfg.preprocessing));
  agg["score_variant"] = std::string(to_string(cfg.eval.variant));
  agg["n_runs"] = cfg.n_runs;
  agg["rmse_mean"] = rm.mean;
  agg["rmse_sd"] = rm.sd;
  agg["score_mean"] = sc.mean;
  agg["score_sd"] = sc.sd;
  agg["runs"] = runs;
  write_text(cfg.output_dir / "aggregate.json", agg.dump(2) + "\n");
  log << "RMSE " << rm.mean << " +/- " << rm.sd << ", score " << sc.mean << " +/- " << sc.sd
      << '\n';
  return agg;
}

MetricsReport cmd_eval(const EvalCommand& cmd, std::ostream& out) {
  const Model model = load_checkpoint(cmd.checkpoint);
  const fs::path stats_path = cmd.stats.value_or(cmd.checkpoint.parent_path() / "norm_stats.json");
  const NormStats stats = NormStats::load(stats_path);
  const DatasetBundle bundle = load_subset(cmd.data_root, cmd.subset);
  const MetricsReport report = evaluate_test(model, bundle, stats, cmd.options);

  out << report.to_json() << '\n';
  if (cmd.out) {
    fs::create_directories(*cmd.out);
    write_text(*cmd.out / "metrics.json", report.to_json() + "\n");
    if (cmd.write_curves) {
      fs::create_directories(*cmd.out / "curves");
      for (std::size_t i = 0; i < bundle.test.size(); ++i) {
        const auto curve = predict_curve(model, bundle.test[i], stats, bundle.test_rul[i],
                                         cmd.options.r_max);
        std::ofstream f(*cmd.out / "curves" / ("unit_" + std::to_string(curve.unit_id) + ".csv"),
                        std::ios::binary);
        curve.write_csv(f);
      }
    }
  }
  return report;
}

json cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  const DatasetBundle bundle = load_data(cfg);
  fs::create_directories(cfg.output_dir);

  const std::size_t budget = ablation_step_budget(cfg, bundle);
  json rows = json::array();
  std::ostringstream csv;
  csv << "mode,train_samples,rmse,score\n";
  for (auto mode : {PreprocessingMode::FullSequence, PreprocessingMode::Windowed}) {
    RunConfig c = cfg;
    c.preprocessing = mode;
    c.train.max_steps = budget;
    const RunResult r = run_once(c, bundle, cfg.train.seed);
    rows.push_back({{"mode", std::string(to_string(mode))},
                    {"train_samples", r.n_train_samples},
                    {"rmse", r.metrics.rmse},
                    {"score", r.metrics.score},
                    {"epochs_run", r.report.epochs_run},
                    {"steps", r.report.steps}});
    csv << to_string(mode) << ',' << r.n_train_samples << ',' << r.metrics.rmse << ','
        << r.metrics.score << '\n';
  }
  json doc;
  doc["subset_id"] = std::string(to_string(cfg.subset));
  doc["window"] = cfg.window;
  doc["seed"] = cfg.train.seed;
  doc["max_steps"] = budget;
  doc["rows"] = rows;
  write_text(cfg.output_dir / "ablation.json", doc.dump(2) + "\n");
  write_text(cfg.output_dir / "ablation.csv", csv.str());

  out << std::left << std::setw(15) << "mode" << std::setw(15) << "train_samples"
      << std::setw(12) << "rmse"
      << "score\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(15) << r["mode"].get<std::string>() << std::setw(15)
        << r["train_samples"].get<std::size_t>() << std::setw(12) << r["rmse"].get<double>()
        << r["score"].get<double>() << '\n';
  }
  return doc;
}

void cmd_plot(const std::vector<fs::path>& csvs, const fs::path& out) {
  if (csvs.empty()) throw ValidationError("plot: no input files");
  std::vector<CurvePanel> panels;
  for (const auto& p : csvs) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw NotFoundError("cannot open " + p.string());
    try {
      panels.push_back({p.stem().string(), CurveRecord::read_csv(f)});
    } catch (const ParseError& e) {
      throw ParseError(p.string() + ": " + e.what(), e.line(), e.column());
    } catch (const ValidationError& e) {
      throw ValidationError(p.string() + ": " + e.what());
    }
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, render_curves_svg(panels));
}

void cmd_synth(const SynthConfig& cfg, const fs::path& out_dir) {
  save_subset(out_dir, generate_synthetic(cfg));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"rulforge: remaining-useful-life prediction with a dilated TCN", "rulforge"};
  app.require_subcommand(1);

  const char* env_root = std::getenv("RULFORGE_DATA");
  const std::string default_root = env_root ? env_root : "";

  // inspect
  std::string inspect_root = default_root, inspect_subset = "FD001";
  auto* inspect = app.add_subcommand("inspect", "Summarise a dataset subset");
  inspect->add_option("--data-root", inspect_root, "Directory with the subset files");
  inspect->add_option("--subset", inspect_subset, "FD001..FD004 or SYNTH");

  // train / ablate share the config flags
  std::string config_path;
  Overrides ov;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration JSON")->required();
    sub->add_option_function<std::string>("--subset", [&](const std::string& v) { ov.subset = v; });
    sub->add_option_function<std::string>("--data-root", [&](const std::string& v) { ov.data_root = v; });
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { ov.out = v; });
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { ov.seed = v; });
    sub->add_option_function<int>("--runs", [&](int v) { ov.runs = v; });
    sub->add_option_function<std::string>("--preset", [&](const std::string& v) { ov.preset = v; })
        ->check(CLI::IsMember({"paper-4block", "paper-rf125", "tiny"}));
  };
  auto* train_cmd = app.add_subcommand("train", "Train (optionally several seeds) and evaluate");
  add_run_flags(train_cmd);
  auto* ablate = app.add_subcommand("ablate", "Compare full-sequence and windowed preprocessing");
  add_run_flags(ablate);

  // eval
  EvalCommand ev;
  std::string ev_ckpt, ev_stats, ev_root = default_root, ev_subset = "FD001", ev_out,
                       ev_variant = "paper";
  bool ev_no_cap = false;
  std::size_t ev_window = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test set");
  eval->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  eval->add_option("--stats", ev_stats, "norm_stats.json (default: next to the checkpoint)");
  eval->add_option("--data-root", ev_root, "Directory with the subset files");
  eval->add_option("--subset", ev_subset, "FD001..FD004 or SYNTH");
  eval->add_option("--out", ev_out, "Directory for metrics.json and curves/");
  eval->add_flag("--curves", ev.write_curves, "Write per-engine curve CSVs (needs --out)");
  eval->add_option("--score-variant", ev_variant, "paper or offset_minus_one");
  eval->add_flag("--no-cap-truth", ev_no_cap, "Score against uncapped true RUL");
  eval->add_option("--window", ev_window, "Feed only the last N steps (windowed-trained models)");

  // plot
  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Render curve CSVs to SVG");
  plot->add_option("csv", plot_inputs, "Curve CSV files (cycle,predicted,actual)")->required();
  plot->add_option("--out", plot_out, "Output SVG path")->required();

  // synth
  SynthConfig synth;
  std::string synth_out, synth_config;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic bundle in C-MAPSS text format");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--config", synth_config, "JSON file with synth fields");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--n-train", synth.n_train);
  synth_cmd->add_option("--n-test", synth.n_test);
  synth_cmd->add_option("--min-len", synth.min_len);
  synth_cmd->add_option("--max-len", synth.max_len);
  synth_cmd->add_option("--noise-std", synth.noise_std);
  synth_cmd->add_option("--informative", synth.n_informative_sensors);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*inspect) {
      if (inspect_root.empty()) throw NotFoundError("no data root (use --data-root or RULFORGE_DATA)");
      cmd_inspect(inspect_root, parse_subset_id(inspect_subset), out);
    } else if (*train_cmd) {
      cmd_train(resolve_run_config(config_path, ov), err);
    } else if (*ablate) {
      cmd_ablate(resolve_run_config(config_path, ov), out);
    } else if (*eval) {
      if (ev_root.empty()) throw NotFoundError("no data root (use --data-root or RULFORGE_DATA)");
      ev.checkpoint = ev_ckpt;
      if (!ev_stats.empty()) ev.stats = ev_stats;
      ev.data_root = ev_root;
      ev.subset = parse_subset_id(ev_subset);
      if (!ev_out.empty()) ev.out = ev_out;
      ev.options.variant = parse_score_variant(ev_variant);
      ev.options.cap_truth = !ev_no_cap;
      if (ev_window > 0) ev.options.window = ev_window;
      cmd_eval(ev, out);
    } else if (*plot) {
      std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
      cmd_plot(inputs, plot_out);
    } else if (*synth_cmd) {
      if (!synth_config.empty()) {
        std::ifstream f(synth_config);
        if (!f) throw NotFoundError("cannot open " + synth_config);
        json j;
        try {
          j = json::parse(f);
        } catch (const json::exception& e) {
          throw ValidationError("synth config: invalid JSON: " + std::string(e.what()));
        }
        synth = parse_synth_config(j, "synth");
      }
      cmd_synth(synth, synth_out);
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " (epoch " << e.epoch() << ")\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace rulforge::cli
