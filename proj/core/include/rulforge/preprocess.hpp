#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rulforge/dataset.hpp"
#include "rulforge/tensor.hpp"

namespace rulforge {

using Rng = std::mt19937_64;

inline constexpr int kMaxRul = 125;
inline constexpr double kConstantFeatureEpsilon = 1e-8;
inline constexpr int kNormStatsFormatVersion = 1;

inline constexpr int kMinTrim = 10;
inline constexpr int kMaxTrim = 75;
inline constexpr int kMinTrimmedLength = 30;

struct NormalizerOptions {
  /// Feed the three operating settings to the model (still subject to the
  /// constant-feature rule).
  bool include_settings = true;
  double epsilon_const = kConstantFeatureEpsilon;
};

/// Per-feature z-score statistics over the 24 raw columns (3 settings then
/// 21 sensors). Features with std below epsilon_const are dropped.
struct NormStats {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<bool> retained_mask;
  double epsilon_const = kConstantFeatureEpsilon;

  std::size_t retained_count() const;
  std::vector<std::size_t> retained_indices() const;

  std::string to_json() const;
  static NormStats from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static NormStats load(const std::filesystem::path& path);

  bool operator==(const NormStats&) const = default;
};

/// Standardised features [T x F] with per-timestep capped RUL labels.
struct LabeledSequence {
  int unit_id = 0;
  Tensor<double> features;
  std::vector<double> labels;
  std::size_t original_length = 0;

  std::size_t length() const { return labels.size(); }
  std::size_t num_features() const { return features.dim(1); }
};

/// Population mean/std per raw feature over every frame of `trajectories`.
NormStats fit_normalizer(const std::vector<EngineTrajectory>& trajectories,
                         const NormalizerOptions& options = {});

/// (x - mean) / std for the retained features, in column order.
Tensor<double> apply_normalizer(const NormStats& stats, const EngineTrajectory& trajectory);

/// y_t = min(r_max, T - t) for t = 1..T.
std::vector<double> label_rul(int length, int r_max = kMaxRul);

/// Labels of a trajectory whose last observed cycle still has `final_rul`
/// cycles left: y_t = min(r_max, final_rul + T - t).
std::vector<double> label_rul_truncated(int length, int final_rul, int r_max = kMaxRul);

/// Normalised features plus run-to-failure labels.
LabeledSequence make_labeled_sequence(const NormStats& stats,
                                      const EngineTrajectory& trajectory,
                                      int r_max = kMaxRul);

/// Number of trailing steps to drop from a length-T sequence: uniform on
/// [10, min(75, T - 30)], or 0 when T < 40.
int draw_trim(std::size_t length, Rng& rng);

/// Drops draw_trim(T) steps from the end of features and labels together.
LabeledSequence trim_random_end(const LabeledSequence& seq, Rng& rng);
LabeledSequence trim_end(const LabeledSequence& seq, std::size_t steps);

/// Fixed-length overlapping windows of the baseline preprocessing. Each
/// window is labelled with the RUL of its last step; sequences shorter than
/// `window` are left-padded with zero features.
std::vector<LabeledSequence> window_segment(const LabeledSequence& seq,
                                            std::size_t window, std::size_t stride = 1);

/// Which timesteps of a sequence contribute to the loss.
enum class Supervision { Dense, LastStep };

/// Right-padded batch. features [B, F, L], labels [B, L], mask [B, L].
/// target_mask marks the supervised subset of the valid positions.
struct PaddedBatch {
  Tensor<double> features;
  Tensor<double> labels;
  Mask mask;
  Mask target_mask;
  std::vector<std::size_t> lengths;
  /// Position of each row in the list the batch was built from.
  std::vector<std::size_t> source_indices;

  std::size_t batch_size() const { return lengths.size(); }
  std::size_t max_length() const { return mask.dim(1); }
};

/// Pads `seqs[indices]` into one batch. `pad_to` > max length adds extra
/// padding.
PaddedBatch make_batch(const std::vector<LabeledSequence>& seqs,
                       const std::vector<std::size_t>& indices,
                       Supervision supervision = Supervision::Dense,
                       std::size_t pad_to = 0);

struct BatchingOptions {
  std::size_t batch_size = 8;
  /// Sequences are shuffled, cut into pools of pool_batches * batch_size,
  /// and sorted by length inside a pool before batching.
  std::size_t pool_batches = 4;
  Supervision supervision = Supervision::Dense;
};

/// Shuffled, length-bucketed batches. Every sequence lands in exactly one batch.
std::vector<PaddedBatch> build_batches(const std::vector<LabeledSequence>& seqs,
                                       Rng& rng, const BatchingOptions& options = {});

/// Batches in input order, for evaluation.
std::vector<PaddedBatch> build_batches_in_order(const std::vector<LabeledSequence>& seqs,
                                                std::size_t batch_size,
                                                Supervision supervision = Supervision::Dense);

}  // namespace rulforge
