#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulforge/dataset.hpp"
#include "rulforge/model.hpp"
#include "rulforge/preprocess.hpp"

namespace rulforge {

/// `Paper` sums exp(-d/13) for d < 0 and exp(d/10) for d >= 0, so a perfect
/// prediction contributes 1. `OffsetMinusOne` subtracts 1 from every term.
enum class ScoreVariant { Paper, OffsetMinusOne };

std::string_view to_string(ScoreVariant v);
ScoreVariant parse_score_variant(std::string_view text);

double rmse(std::span<const double> preds, std::span<const double> truths);
double nasa_score(std::span<const double> preds, std::span<const double> truths,
                  ScoreVariant variant = ScoreVariant::Paper);

struct EngineResult {
  int unit_id = 0;
  double predicted_rul = 0.0;
  double true_rul = 0.0;
  double d_n = 0.0;  // predicted - true
};

struct MetricsReport {
  SubsetId subset = SubsetId::SYNTH;
  double rmse = 0.0;
  double score = 0.0;
  ScoreVariant score_variant = ScoreVariant::Paper;
  bool truth_capped = true;
  std::size_t n_engines = 0;
  std::vector<EngineResult> per_engine;  // sorted by unit_id

  std::string to_json() const;
};

struct EvalOptions {
  bool cap_truth = true;
  ScoreVariant variant = ScoreVariant::Paper;
  int r_max = kMaxRul;
  /// Feed only the last `window` steps (left zero-padded), as the windowed
  /// baseline was trained. Full trajectory when empty.
  std::optional<std::size_t> window;
  std::size_t batch_size = 32;
};

/// Metrics from one final-step prediction per engine. Predictions are clamped
/// to [0, r_max]; truths are capped at r_max when options.cap_truth.
MetricsReport evaluate_predictions(SubsetId subset, const std::vector<int>& unit_ids,
                                   const std::vector<double>& predictions,
                                   const std::vector<int>& true_rul,
                                   const EvalOptions& options = {});

/// Final-step RUL estimate of each test engine, in bundle order, unclamped.
std::vector<double> predict_final_rul(const Model& model, const DatasetBundle& bundle,
                                      const NormStats& stats, const EvalOptions& options = {});

MetricsReport evaluate_test(const Model& model, const DatasetBundle& bundle,
                            const NormStats& stats, const EvalOptions& options = {});

/// Per-step prediction of one engine next to its capped true RUL.
struct CurveRecord {
  int unit_id = 0;
  std::vector<int> cycles;
  std::vector<double> predicted;
  std::vector<double> actual;

  /// "cycle,predicted,actual" header then one row per cycle.
  void write_csv(std::ostream& out) const;
  static CurveRecord read_csv(std::istream& in, int unit_id = 0);
};

/// `final_rul` is the true RUL at the last observed cycle (0 for a
/// run-to-failure trajectory).
CurveRecord predict_curve(const Model& model, const EngineTrajectory& trajectory,
                          const NormStats& stats, int final_rul = 0, int r_max = kMaxRul);

}  // namespace rulforge
