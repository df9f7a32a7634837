#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cli/run_config.hpp"
#include "json.hpp"

namespace rulforge::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitInput = 2,
  kExitIntegrity = 3,
};

/// Maps a library exception onto the exit code contract.
int exit_code_for(const std::exception& e);

/// Flag values that take precedence over the JSON config.
struct Overrides {
  std::optional<std::string> subset;
  std::optional<std::filesystem::path> data_root;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<std::string> preset;
};

/// Loads the config, applies flag overrides and the RULFORGE_DATA fallback.
RunConfig resolve_run_config(const std::filesystem::path& config_path, const Overrides& o);
void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Engine counts, length statistics and constant features of a subset.
void cmd_inspect(const std::filesystem::path& data_root, SubsetId subset, std::ostream& out);

/// Trains cfg.n_runs models with seeds seed, seed + 1, ... Each run writes
/// checkpoint.rfck, norm_stats.json, epoch_log.csv, train_report.json and
/// metrics.json under output_dir/run_<i>/; aggregate.json holds the mean and
/// sample SD of RMSE and Score. Returns the aggregate document.
nlohmann::json cmd_train(const RunConfig& cfg, std::ostream& log);

struct EvalCommand {
  std::filesystem::path checkpoint;
  /// Defaults to norm_stats.json next to the checkpoint.
  std::optional<std::filesystem::path> stats;
  std::filesystem::path data_root;
  SubsetId subset = SubsetId::FD001;
  std::optional<std::filesystem::path> out;
  bool write_curves = false;
  EvalOptions options;
};

/// Prints the MetricsReport JSON; with `out` also writes metrics.json and,
/// if requested, curves/unit_<id>.csv for every test engine.
MetricsReport cmd_eval(const EvalCommand& cmd, std::ostream& out);

/// Trains full_sequence and windowed preprocessing under the same seed and
/// training budget; writes ablation.json and ablation.csv under output_dir.
nlohmann::json cmd_ablate(const RunConfig& cfg, std::ostream& out);

/// Renders curve CSVs into one SVG; panel titles are the file stems.
void cmd_plot(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out);

/// Writes train_SYNTH.txt, test_SYNTH.txt and RUL_SYNTH.txt.
void cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rulforge::cli
