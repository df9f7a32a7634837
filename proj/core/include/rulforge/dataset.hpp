#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rulforge {

inline constexpr std::size_t kNumSettings = 3;
inline constexpr std::size_t kNumSensors = 21;
inline constexpr std::size_t kNumRawFeatures = kNumSettings + kNumSensors;
inline constexpr std::size_t kNumColumns = 2 + kNumRawFeatures;

/// One cycle of one engine: 3 operating settings followed by 21 sensors.
struct Frame {
  int cycle = 0;
  std::array<double, kNumRawFeatures> values{};

  double setting(std::size_t i) const { return values[i]; }
  double sensor(std::size_t i) const { return values[kNumSettings + i]; }

  bool operator==(const Frame&) const = default;
};

/// Run-to-failure (train) or truncated (test) trajectory of a single engine.
/// Cycles are 1..T without gaps.
struct EngineTrajectory {
  int unit_id = 0;
  std::vector<Frame> frames;

  std::size_t length() const { return frames.size(); }

  bool operator==(const EngineTrajectory&) const = default;
};

enum class SubsetId { FD001, FD002, FD003, FD004, SYNTH };

std::string_view to_string(SubsetId id);
SubsetId parse_subset_id(std::string_view text);

struct SubsetCounts {
  std::size_t train;
  std::size_t test;
};

/// Published engine counts, or nullopt for SYNTH.
std::optional<SubsetCounts> expected_counts(SubsetId id);

struct DatasetBundle {
  SubsetId subset = SubsetId::SYNTH;
  std::vector<EngineTrajectory> train;
  std::vector<EngineTrajectory> test;
  /// True RUL at the last observed cycle of each test engine, same order as `test`.
  std::vector<int> test_rul;
  /// Non-fatal findings from load_subset (e.g. engine counts that differ from
  /// the published table).
  std::vector<std::string> warnings;

  bool operator==(const DatasetBundle&) const = default;
};

/// Sensor names (symbol, description) in file column order.
struct SensorInfo {
  std::string_view symbol;
  std::string_view description;
};
const std::array<SensorInfo, kNumSensors>& sensor_table();

std::vector<EngineTrajectory> parse_trajectory_file(std::istream& in);
std::vector<int> parse_rul_file(std::istream& in);

/// Reads train_<id>.txt, test_<id>.txt and RUL_<id>.txt from `root`.
DatasetBundle load_subset(const std::filesystem::path& root, SubsetId id);

/// Writes trajectories in the 26-column text format, using the shortest
/// decimal representation that round-trips each value.
void write_trajectory_file(std::ostream& out,
                           const std::vector<EngineTrajectory>& trajectories);
void write_rul_file(std::ostream& out, const std::vector<int>& rul);

/// Writes the three files of `bundle` into `root` using the load_subset names.
void save_subset(const std::filesystem::path& root, const DatasetBundle& bundle);

struct SynthConfig {
  int n_train = 20;
  int n_test = 10;
  int min_len = 120;
  int max_len = 240;
  double noise_std = 0.05;
  int n_informative_sensors = 6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Synthetic CMAPSS-shaped data. Informative sensors follow monotone
/// degradation ramps towards failure; a fixed set of sensors is constant and
/// the rest are pure noise. Test engines are run-to-failure trajectories cut
/// at a random cycle, with the removed tail length stored in test_rul.
DatasetBundle generate_synthetic(const SynthConfig& cfg);

struct SyntheticData {
  DatasetBundle bundle;
  /// Test engines before truncation, same order as bundle.test.
  std::vector<EngineTrajectory> full_test;
};

/// Same draws as generate_synthetic, also returning the untruncated test runs.
SyntheticData generate_synthetic_with_truth(const SynthConfig& cfg);

}  // namespace rulforge
