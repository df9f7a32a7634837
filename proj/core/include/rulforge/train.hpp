#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rulforge/error.hpp"
#include "rulforge/model.hpp"
#include "rulforge/preprocess.hpp"

namespace rulforge {

enum class OptimizerKind { Adam, Sgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 0.01;
  int max_epochs = 1000;
  int patience = 40;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  OptimizerKind optimizer = OptimizerKind::Adam;
  /// Global-norm clipping threshold; off when empty.
  std::optional<double> grad_clip;
  /// Random end trimming of training and validation sequences.
  bool trim = true;
  /// Draw fresh trims every epoch instead of once per run.
  bool retrim_each_epoch = false;
  /// Hard cap on optimizer steps across all epochs.
  std::optional<std::size_t> max_steps;
  Supervision supervision = Supervision::Dense;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = 0;
  std::size_t steps = 0;
  std::vector<double> train_loss_curve;
  std::vector<double> val_loss_curve;
  bool stopped_early = false;

  std::string to_json() const;
};

/// Patience-based stopping rule on a loss to be minimised.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw ValidationError("early stopping: patience must be >= 1");
  }

  /// Records the loss of `epoch`; returns true if it is a new best.
  bool update(int epoch, double loss) {
    if (loss < best_loss_) {
      best_loss_ = loss;
      best_epoch_ = epoch;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected) or plain SGD, with
/// optional global-norm gradient clipping applied first.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::optional<double> grad_clip = {})
      : kind_(kind), lr_(learning_rate), clip_(grad_clip) {}

  void step(const std::vector<ParamTensor<T>*>& params) {
    if (moments_.empty()) {
      for (auto* p : params) {
        moments_.emplace_back(std::vector<double>(p->value.size()),
                              std::vector<double>(p->value.size()));
      }
    }
    if (moments_.size() != params.size()) {
      throw ValidationError("optimizer: parameter list changed between steps");
    }
    double scale = 1.0;
    if (clip_) {
      double sq = 0.0;
      for (auto* p : params) {
        for (T g : p->grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
      }
      const double norm = std::sqrt(sq);
      if (norm > *clip_) scale = *clip_ / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto value = params[i]->value.data();
      auto grad = params[i]->grad.data();
      auto& [m, v] = moments_[i];
      for (std::size_t k = 0; k < value.size(); ++k) {
        const double g = scale * static_cast<double>(grad[k]);
        if (kind_ == OptimizerKind::Sgd) {
          value[k] = static_cast<T>(static_cast<double>(value[k]) - lr_ * g);
          continue;
        }
        m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g;
        v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g * g;
        const double update = lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kEps);
        value[k] = static_cast<T>(static_cast<double>(value[k]) - update);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  OptimizerKind kind_;
  double lr_;
  std::optional<double> clip_;
  std::size_t t_ = 0;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Engine-level split of n items: round(n * val_fraction) (at least 1, at most
/// n - 1) go to validation. Deterministic for a given seed; both index lists
/// are sorted.
SplitIndices split_indices(std::size_t n, double val_fraction, std::uint64_t seed);

template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> split_train_val(const std::vector<Item>& items,
                                                                double val_fraction,
                                                                std::uint64_t seed) {
  const auto idx = split_indices(items.size(), val_fraction, seed);
  std::pair<std::vector<Item>, std::vector<Item>> out;
  for (auto i : idx.train) out.first.push_back(items[i]);
  for (auto i : idx.val) out.second.push_back(items[i]);
  return out;
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Masked-MSE training with early stopping on the validation loss. On return
/// `model` holds the parameters of the best validation epoch.
TrainReport train(Model& model, const std::vector<LabeledSequence>& train_set,
                  const std::vector<LabeledSequence>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean squared error over the supervised steps of `seqs`, eval mode.
double evaluate_loss(const Model& model, const std::vector<LabeledSequence>& seqs,
                     std::size_t batch_size, Supervision supervision = Supervision::Dense);

}  // namespace rulforge
