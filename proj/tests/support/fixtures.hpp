#pragma once

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rulforge/dataset.hpp"
#include "rulforge/model.hpp"
#include "rulforge/preprocess.hpp"

namespace rulforge::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("rulforge_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// One C-MAPSS row: unit, cycle and 24 feature values derived from `base`.
inline std::string cmapss_row(int unit, int cycle, double base = 0.0) {
  std::ostringstream s;
  s << unit << ' ' << cycle;
  for (std::size_t i = 0; i < kNumRawFeatures; ++i) s << ' ' << base + 0.5 * static_cast<double>(i);
  return s.str();
}

/// A trajectory whose feature i at cycle t is f(i, t).
template <typename Fn>
EngineTrajectory make_trajectory(int unit, int length, Fn&& f) {
  EngineTrajectory traj{unit, {}};
  for (int t = 1; t <= length; ++t) {
    Frame fr;
    fr.cycle = t;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) fr.values[i] = f(i, t);
    traj.frames.push_back(fr);
  }
  return traj;
}

inline TcnConfig tiny_config(int in_features, int blocks = 1) {
  TcnConfig cfg = model_preset("tiny", in_features);
  cfg.num_blocks = blocks;
  return cfg;
}

/// Labeled sequences with random features and capped labels.
inline std::vector<LabeledSequence> random_sequences(std::size_t n, std::size_t features,
                                                     std::size_t min_len, std::size_t max_len,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<LabeledSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t T = len(rng);
    LabeledSequence s;
    s.unit_id = static_cast<int>(i + 1);
    s.features = Tensor<double>({T, features});
    for (auto& v : s.features.data()) v = noise(rng);
    s.labels = label_rul(static_cast<int>(T));
    s.original_length = T;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rulforge::testing
