#include "rulforge/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "rulforge/error.hpp"

namespace rulforge {

using nlohmann::json;

std::string_view to_string(ScoreVariant v) {
  return v == ScoreVariant::Paper ? "paper" : "offset_minus_one";
}

ScoreVariant parse_score_variant(std::string_view text) {
  if (text == "paper") return ScoreVariant::Paper;
  if (text == "offset_minus_one") return ScoreVariant::OffsetMinusOne;
  throw ValidationError("unknown score variant '" + std::string(text) + "'");
}

namespace {

void check_pairs(std::span<const double> preds, std::span<const double> truths,
                 const char* what) {
  if (preds.empty()) throw ValidationError(std::string(what) + ": empty input");
  if (preds.size() != truths.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(preds.size()) +
                     " predictions for " + std::to_string(truths.size()) + " truths");
  }
}

}  // namespace

double rmse(std::span<const double> preds, std::span<const double> truths) {
  check_pairs(preds, truths, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = truths[i] - preds[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(preds.size()));
}

double nasa_score(std::span<const double> preds, std::span<const double> truths,
                  ScoreVariant variant) {
  check_pairs(preds, truths, "nasa_score");
  const double offset = variant == ScoreVariant::OffsetMinusOne ? 1.0 : 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - truths[i];
    sum += (d < 0.0 ? std::exp(-d / 13.0) : std::exp(d / 10.0)) - offset;
  }
  return sum;
}

std::string MetricsReport::to_json() const {
  json j;
  j["subset_id"] = std::string(rulforge::to_string(subset));
  j["rmse"] = rmse;
  j["score"] = score;
  j["score_variant"] = std::string(rulforge::to_string(score_variant));
  j["truth_capped"] = truth_capped;
  j["n_engines"] = n_engines;
  json rows = json::array();
  for (const auto& e : per_engine) {
    rows.push_back({{"unit_id", e.unit_id},
                    {"predicted_rul", e.predicted_rul},
                    {"true_rul", e.true_rul},
                    {"d_n", e.d_n}});
  }
  j["per_engine"] = std::move(rows);
  return j.dump(2);
}

MetricsReport evaluate_predictions(SubsetId subset, const std::vector<int>& unit_ids,
                                   const std::vector<double>& predictions,
                                   const std::vector<int>& true_rul,
                                   const EvalOptions& options) {
  if (unit_ids.size() != predictions.size() || true_rul.size() != predictions.size()) {
    throw ShapeError("evaluate: unit ids, predictions and truths differ in length");
  }
  if (predictions.empty()) throw ValidationError("evaluate: no test engines");

  MetricsReport r;
  r.subset = subset;
  r.score_variant = options.variant;
  r.truth_capped = options.cap_truth;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    EngineResult e;
    e.unit_id = unit_ids[i];
    e.predicted_rul = std::clamp(predictions[i], 0.0, static_cast<double>(options.r_max));
    e.true_rul = options.cap_truth ? std::min(true_rul[i], options.r_max) : true_rul[i];
    e.d_n = e.predicted_rul - e.true_rul;
    r.per_engine.push_back(e);
  }
  std::stable_sort(r.per_engine.begin(), r.per_engine.end(),
                   [](const EngineResult& a, const EngineResult& b) { return a.unit_id < b.unit_id; });

  std::vector<double> p, t;
  for (const auto& e : r.per_engine) {
    p.push_back(e.predicted_rul);
    t.push_back(e.true_rul);
  }
  r.rmse = rmse(p, t);
  r.score = nasa_score(p, t, options.variant);
  r.n_engines = r.per_engine.size();
  return r;
}

namespace {

void check_ready(const Model& model, const NormStats& stats) {
  if (stats.means.size() != kNumRawFeatures) {
    throw ValidationError("evaluate: normalisation statistics are missing");
  }
  if (stats.retained_count() != static_cast<std::size_t>(model.config().in_features)) {
    throw ValidationError("evaluate: statistics retain " +
                          std::to_string(stats.retained_count()) + " features, model expects " +
                          std::to_string(model.config().in_features));
  }
}

LabeledSequence test_sequence(const NormStats& stats, const EngineTrajectory& traj,
                              int final_rul, int r_max) {
  LabeledSequence s;
  s.unit_id = traj.unit_id;
  s.features = apply_normalizer(stats, traj);
  s.labels = label_rul_truncated(static_cast<int>(traj.length()), final_rul, r_max);
  s.original_length = traj.length();
  return s;
}

}  // namespace

std::vector<double> predict_final_rul(const Model& model, const DatasetBundle& bundle,
                                      const NormStats& stats, const EvalOptions& options) {
  check_ready(model, stats);
  if (bundle.test.size() != bundle.test_rul.size()) {
    throw ValidationError("evaluate: test_rul does not match test engines");
  }
  std::vector<LabeledSequence> seqs;
  for (std::size_t i = 0; i < bundle.test.size(); ++i) {
    auto s = test_sequence(stats, bundle.test[i], bundle.test_rul[i], options.r_max);
    if (options.window) {
      auto windows = window_segment(s, *options.window);
      s = std::move(windows.back());
    }
    seqs.push_back(std::move(s));
  }

  std::vector<double> out(seqs.size());
  for (const auto& batch : build_batches_in_order(seqs, options.batch_size)) {
    const Tensor<float> pred = model.predict(batch);
    for (std::size_t b = 0; b < batch.batch_size(); ++b) {
      out[batch.source_indices[b]] = pred(b, batch.lengths[b] - 1);
    }
  }
  return out;
}

MetricsReport evaluate_test(const Model& model, const DatasetBundle& bundle,
                            const NormStats& stats, const EvalOptions& options) {
  const auto preds = predict_final_rul(model, bundle, stats, options);
  std::vector<int> ids;
  for (const auto& t : bundle.test) ids.push_back(t.unit_id);
  return evaluate_predictions(bundle.subset, ids, preds, bundle.test_rul, options);
}

CurveRecord predict_curve(const Model& model, const EngineTrajectory& trajectory,
                          const NormStats& stats, int final_rul, int r_max) {
  check_ready(model, stats);
  std::vector<LabeledSequence> seqs{test_sequence(stats, trajectory, final_rul, r_max)};
  const auto batch = make_batch(seqs, {0});
  const Tensor<float> pred = model.predict(batch);

  CurveRecord c;
  c.unit_id = trajectory.unit_id;
  c.actual = seqs[0].labels;
  for (std::size_t t = 0; t < trajectory.length(); ++t) {
    c.cycles.push_back(trajectory.frames[t].cycle);
    c.predicted.push_back(std::clamp(static_cast<double>(pred(0, t)), 0.0,
                                     static_cast<double>(r_max)));
  }
  return c;
}

void CurveRecord::write_csv(std::ostream& out) const {
  out << "cycle,predicted,actual\n";
  char buf[96];
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", cycles[i], predicted[i], actual[i]);
    out << buf;
  }
}

CurveRecord CurveRecord::read_csv(std::istream& in, int unit_id) {
  CurveRecord c;
  c.unit_id = unit_id;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "cycle,predicted,actual") {
        throw ParseError("curve csv line " + std::to_string(line_no) +
                             ": expected header 'cycle,predicted,actual'",
                         line_no);
      }
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string a, b, d, extra;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, d, ',') ||
        std::getline(ss, extra, ',')) {
      throw ParseError("curve csv line " + std::to_string(line_no) + ": expected 3 fields",
                       line_no);
    }
    try {
      std::size_t used = 0;
      const int cycle = std::stoi(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      const double p = std::stod(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      const double y = std::stod(d, &used);
      if (used != d.size()) throw std::invalid_argument(d);
      c.cycles.push_back(cycle);
      c.predicted.push_back(p);
      c.actual.push_back(y);
    } catch (const std::logic_error&) {
      throw ParseError("curve csv line " + std::to_string(line_no) + ": non-numeric field",
                       line_no);
    }
  }
  if (c.cycles.empty()) throw ValidationError("curve csv: no data rows");
  return c;
}

}  // namespace rulforge
