#include "rulforge/train.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "json.hpp"

namespace rulforge {

using nlohmann::json;

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::Adam;
  if (text == "sgd") return OptimizerKind::Sgd;
  throw ValidationError("unknown optimizer '" + std::string(text) + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 0.5)) fail("val_fraction must be in (0, 0.5)");
  if (grad_clip && !(*grad_clip > 0.0)) fail("grad_clip must be positive");
  if (max_steps && *max_steps < 1) fail("max_steps must be >= 1");
}

std::string TrainReport::to_json() const {
  json j;
  j["epochs_run"] = epochs_run;
  j["best_epoch"] = best_epoch;
  j["steps"] = steps;
  j["stopped_early"] = stopped_early;
  j["train_loss_curve"] = train_loss_curve;
  j["val_loss_curve"] = val_loss_curve;
  return j.dump(2);
}

SplitIndices split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (n < 2) throw ValidationError("split: need at least 2 engines, got " + std::to_string(n));
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ValidationError("split: val_fraction must be in (0, 1)");
  }
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix64(seed ^ 0x73706c6974ULL));
  std::shuffle(order.begin(), order.end(), rng);

  SplitIndices s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

double evaluate_loss(const Model& model, const std::vector<LabeledSequence>& seqs,
                     std::size_t batch_size, Supervision supervision) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& batch : build_batches_in_order(seqs, batch_size, supervision)) {
    const Tensor<float> pred = model.predict(batch);
    auto p = pred.data();
    auto y = batch.labels.data();
    auto m = batch.target_mask.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!m[i]) continue;
      const double d = static_cast<double>(p[i]) - y[i];
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw ValidationError("evaluate_loss: no supervised steps");
  return sum / static_cast<double>(count);
}

namespace {

std::vector<LabeledSequence> trimmed(const std::vector<LabeledSequence>& seqs, Rng& rng) {
  std::vector<LabeledSequence> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(trim_random_end(s, rng));
  return out;
}

std::vector<Tensor<float>> snapshot(const Model& model) {
  std::vector<Tensor<float>> out;
  for (const auto& [name, t] : model.state()) out.push_back(*t);
  return out;
}

void restore(Model& model, const std::vector<Tensor<float>>& snap) {
  auto state = model.state();
  for (std::size_t i = 0; i < state.size(); ++i) *state[i].second = snap[i];
}

}  // namespace

TrainReport train(Model& model, const std::vector<LabeledSequence>& train_set,
                  const std::vector<LabeledSequence>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  if (val_set.empty()) throw ValidationError("train: empty validation set");
  const auto in_features = static_cast<std::size_t>(model.config().in_features);
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& s : *set) {
      if (s.num_features() != in_features) {
        throw ShapeError("train: sequence of unit " + std::to_string(s.unit_id) + " has " +
                         std::to_string(s.num_features()) + " features, model expects " +
                         std::to_string(in_features));
      }
    }
  }

  Rng trim_rng(mix64(cfg.seed ^ 0x7472696dULL));
  Rng batch_rng(mix64(cfg.seed ^ 0x6261746368ULL));
  Rng val_rng(mix64(cfg.seed ^ 0x76616cULL));

  std::vector<LabeledSequence> val = cfg.trim ? trimmed(val_set, val_rng) : val_set;
  std::vector<LabeledSequence> epoch_train = cfg.trim ? trimmed(train_set, trim_rng) : train_set;

  std::vector<ParamTensor<float>*> params;
  for (auto& [name, p] : model.parameters()) params.push_back(p);
  Optimizer<float> opt(cfg.optimizer, cfg.learning_rate, cfg.grad_clip);
  EarlyStopping stopper(cfg.patience);
  auto best = snapshot(model);

  BatchingOptions bopts;
  bopts.batch_size = cfg.batch_size;
  bopts.supervision = cfg.supervision;

  TrainReport report;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    if (cfg.trim && cfg.retrim_each_epoch && epoch > 1) epoch_train = trimmed(train_set, trim_rng);

    const auto batches = build_batches(epoch_train, batch_rng, bopts);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool budget_spent = false;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const std::uint64_t dropout_seed = batch_rng();
      model.zero_grad();
      try {
        const Tensor<float> pred = model.forward(batch, Mode::Train, dropout_seed);
        const auto loss = masked_mse_loss(pred, batch.labels.cast<float>(), batch.target_mask);
        model.backward(loss.grad);
        std::size_t n = 0;
        for (auto m : batch.target_mask.data()) n += m;
        loss_sum += loss.loss * static_cast<double>(n);
        loss_count += n;
      } catch (const NonFiniteError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(bi + 1) + ": " + e.what() +
                                  "; try a lower learning rate or grad_clip",
                              epoch, static_cast<int>(bi + 1));
      }
      opt.step(params);
      ++report.steps;
      if (cfg.max_steps && report.steps >= *cfg.max_steps) {
        budget_spent = true;
        break;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, loss_count));
    try {
      stats.val_loss = evaluate_loss(model, val, cfg.batch_size, cfg.supervision);
    } catch (const NonFiniteError& e) {
      throw DivergenceError("validation diverged at epoch " + std::to_string(epoch) + ": " +
                                e.what(),
                            epoch, 0);
    }
    report.train_loss_curve.push_back(stats.train_loss);
    report.val_loss_curve.push_back(stats.val_loss);
    report.epochs_run = epoch;
    if (stopper.update(epoch, stats.val_loss)) best = snapshot(model);
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (on_epoch) on_epoch(stats);

    if (stopper.should_stop()) {
      report.stopped_early = true;
      break;
    }
    if (budget_spent) break;
  }
  report.best_epoch = stopper.best_epoch();
  restore(model, best);
  return report;
}

}  // namespace rulforge
