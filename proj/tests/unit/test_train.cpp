#include <algorithm>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "rulforge/checkpoint.hpp"
#include "rulforge/ops.hpp"
#include "rulforge/train.hpp"

using namespace rulforge;
using rulforge::testing::random_sequences;
using rulforge::testing::TempDir;

namespace {

struct SynthSets {
  std::vector<LabeledSequence> train, val;
  std::size_t features = 0;
};

SynthSets synth_sets(const SynthConfig& cfg = {}) {
  const auto bundle = generate_synthetic(cfg);
  const auto stats = fit_normalizer(bundle.train);
  std::vector<LabeledSequence> all;
  for (const auto& t : bundle.train) all.push_back(make_labeled_sequence(stats, t));
  auto [train_set, val_set] = split_train_val(all, 0.1, 0);
  return {train_set, val_set, stats.retained_count()};
}

Model tiny_model(std::size_t features, std::uint64_t seed = 0) {
  Rng rng(seed);
  return Model(model_preset("tiny", static_cast<int>(features)), rng);
}

std::string state_bytes(const Model& m) {
  std::string out;
  for (const auto& [name, t] : m.state()) {
    out.append(reinterpret_cast<const char*>(t->vec().data()), t->size() * sizeof(float));
  }
  return out;
}

}  // namespace

TEST_SUITE("split") {
  TEST_CASE("100 engines at 10%") {
    const auto s = split_indices(100, 0.1, 3);
    CHECK(s.train.size() == 90);
    CHECK(s.val.size() == 10);
  }

  TEST_CASE("deterministic, disjoint and complete") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto a = split_indices(37, 0.2, seed);
      const auto b = split_indices(37, 0.2, seed);
      CHECK(a.train == b.train);
      CHECK(a.val == b.val);
      std::vector<std::size_t> all = a.train;
      all.insert(all.end(), a.val.begin(), a.val.end());
      std::sort(all.begin(), all.end());
      for (std::size_t i = 0; i < 37; ++i) CHECK(all[i] == i);
    }
    CHECK(split_indices(37, 0.2, 1).val != split_indices(37, 0.2, 2).val);
  }

  TEST_CASE("at least one engine on each side") {
    const auto s = split_indices(2, 0.01, 0);
    CHECK(s.train.size() == 1);
    CHECK(s.val.size() == 1);
    CHECK_THROWS_AS(split_indices(1, 0.1, 0), ValidationError);
    CHECK_THROWS_AS(split_indices(10, 0.0, 0), ValidationError);
  }

  TEST_CASE("split_train_val keeps whole sequences") {
    const auto seqs = random_sequences(10, 2, 5, 20, 1);
    const auto [tr, va] = split_train_val(seqs, 0.3, 4);
    CHECK(tr.size() == 7);
    CHECK(va.size() == 3);
    std::vector<int> ids;
    for (const auto& s : tr) ids.push_back(s.unit_id);
    for (const auto& s : va) ids.push_back(s.unit_id);
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults follow the published protocol") {
    const TrainConfig c;
    CHECK(c.batch_size == 8);
    CHECK(c.learning_rate == 0.01);
    CHECK(c.max_epochs == 1000);
    CHECK(c.patience == 40);
    CHECK(c.val_fraction == 0.1);
    CHECK(c.optimizer == OptimizerKind::Adam);
    CHECK_FALSE(c.grad_clip.has_value());
    CHECK_FALSE(c.retrim_each_epoch);
  }

  TEST_CASE("invalid values") {
    auto bad = [](auto mutate) {
      TrainConfig c;
      mutate(c);
      CHECK_THROWS_AS(c.validate(), ValidationError);
    };
    bad([](TrainConfig& c) { c.val_fraction = 0.5; });
    bad([](TrainConfig& c) { c.val_fraction = 0.0; });
    bad([](TrainConfig& c) { c.patience = 0; });
    bad([](TrainConfig& c) { c.batch_size = 0; });
    bad([](TrainConfig& c) { c.learning_rate = -1.0; });
    bad([](TrainConfig& c) { c.grad_clip = 0.0; });
    bad([](TrainConfig& c) { c.max_steps = 0; });
    CHECK(parse_optimizer("sgd") == OptimizerKind::Sgd);
    CHECK_THROWS_AS(parse_optimizer("rmsprop"), ValidationError);
  }
}

TEST_SUITE("early stopping") {
  TEST_CASE("improvement at epoch 5 only stops at epoch 45") {
    EarlyStopping es(40);
    int stopped = 0;
    for (int epoch = 1; epoch <= 1000; ++epoch) {
      es.update(epoch, epoch <= 5 ? 100.0 - epoch : 200.0);
      if (es.should_stop()) {
        stopped = epoch;
        break;
      }
    }
    CHECK(stopped == 45);
    CHECK(es.best_epoch() == 5);
  }

  TEST_CASE("ties are not improvements") {
    EarlyStopping es(2);
    CHECK(es.update(1, 1.0));
    CHECK_FALSE(es.update(2, 1.0));
    CHECK_FALSE(es.update(3, 1.0));
    CHECK(es.should_stop());
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("zero gradients leave parameters unchanged") {
    for (auto kind : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
      ParamTensor<double> p(Tensor<double>({3}, std::vector<double>{1, -2, 3}));
      Optimizer<double> opt(kind, 0.01);
      for (int i = 0; i < 5; ++i) opt.step({&p});
      CHECK(p.value.vec() == std::vector<double>{1, -2, 3});
    }
  }

  TEST_CASE("sgd step") {
    ParamTensor<double> p(Tensor<double>({2}, std::vector<double>{1.0, 1.0}));
    p.grad = Tensor<double>({2}, std::vector<double>{3.0, -0.5});
    Optimizer<double> opt(OptimizerKind::Sgd, 0.01);
    opt.step({&p});
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.03).epsilon(1e-15));
    CHECK(p.value[1] == doctest::Approx(1.0 + 0.005).epsilon(1e-15));
  }

  TEST_CASE("first adam step moves by the learning rate") {
    ParamTensor<double> p(Tensor<double>({2}, std::vector<double>{0.0, 0.0}));
    p.grad = Tensor<double>({2}, std::vector<double>{4.0, -0.001});
    Optimizer<double> opt(OptimizerKind::Adam, 0.01);
    opt.step({&p});
    CHECK(p.value[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(0.01).epsilon(1e-4));
  }

  TEST_CASE("adam minimises x^2 from 5") {
    ParamTensor<double> p(Tensor<double>({1}, 5.0));
    Optimizer<double> opt(OptimizerKind::Adam, 0.1);
    for (int i = 0; i < 500; ++i) {
      p.grad[0] = 2.0 * p.value[0];
      opt.step({&p});
    }
    CHECK(std::abs(p.value[0]) < 0.1);
  }

  TEST_CASE("global-norm clipping") {
    ParamTensor<double> a(Tensor<double>({1}, 0.0)), b(Tensor<double>({1}, 0.0));
    a.grad[0] = 3.0;
    b.grad[0] = 4.0;
    Optimizer<double> opt(OptimizerKind::Sgd, 1.0, 1.0);
    opt.step({&a, &b});
    CHECK(a.value[0] == doctest::Approx(-0.6));
    CHECK(b.value[0] == doctest::Approx(-0.8));
  }
}

TEST_SUITE("train") {
  TEST_CASE("one small step lowers the batch loss") {
    const auto seqs = random_sequences(4, 3, 20, 40, 5);
    const auto batch = make_batch(seqs, {0, 1, 2, 3});
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Model m = tiny_model(3, seed);
      std::vector<ParamTensor<float>*> params;
      for (auto& [n, p] : m.parameters()) params.push_back(p);
      Optimizer<float> opt(OptimizerKind::Adam, 1e-4);
      auto loss_of = [&] {
        const auto pred = m.forward(batch, Mode::Train, 77);
        return masked_mse_loss(pred, batch.labels.cast<float>(), batch.target_mask);
      };
      m.zero_grad();
      const auto before = loss_of();
      m.backward(before.grad);
      opt.step(params);
      CHECK(loss_of().loss < before.loss);
    }
  }

  TEST_CASE("learns the synthetic bundle") {
    const auto sets = synth_sets();
    Model m = tiny_model(sets.features);
    const double initial = evaluate_loss(m, sets.train, 8);
    TrainConfig cfg;
    cfg.max_epochs = 60;
    cfg.patience = 60;
    const auto report = train(m, sets.train, sets.val, cfg);
    CHECK(report.epochs_run == 60);
    CHECK_FALSE(report.stopped_early);
    CHECK(evaluate_loss(m, sets.train, 8) * 10.0 < initial);
    CHECK(report.train_loss_curve.back() * 10.0 < report.train_loss_curve.front());
  }

  TEST_CASE("report invariants and best-snapshot restore") {
    const auto sets = synth_sets();
    Model m = tiny_model(sets.features, 1);
    TrainConfig cfg;
    cfg.max_epochs = 40;
    cfg.patience = 5;
    cfg.trim = false;
    cfg.learning_rate = 0.03;
    std::vector<EpochStats> seen;
    const auto r = train(m, sets.train, sets.val, cfg, [&](const EpochStats& s) { seen.push_back(s); });
    CHECK(static_cast<int>(seen.size()) == r.epochs_run);
    CHECK(r.best_epoch >= 1);
    CHECK(r.best_epoch <= r.epochs_run);
    CHECK(r.val_loss_curve.size() == static_cast<std::size_t>(r.epochs_run));
    const auto best_it = std::min_element(r.val_loss_curve.begin(), r.val_loss_curve.end());
    CHECK(best_it - r.val_loss_curve.begin() + 1 == r.best_epoch);
    CHECK(evaluate_loss(m, sets.val, cfg.batch_size) == *best_it);
    if (r.stopped_early) CHECK(r.epochs_run == r.best_epoch + cfg.patience);
  }

  TEST_CASE("fixed seed gives identical reports and weights") {
    const auto sets = synth_sets();
    TrainConfig cfg;
    cfg.max_epochs = 8;
    cfg.seed = 9;
    Model a = tiny_model(sets.features, 2), b = tiny_model(sets.features, 2);
    const auto ra = train(a, sets.train, sets.val, cfg);
    const auto rb = train(b, sets.train, sets.val, cfg);
    CHECK(ra.to_json() == rb.to_json());
    CHECK(state_bytes(a) == state_bytes(b));
    CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  }

  TEST_CASE("step budget") {
    const auto sets = synth_sets();
    Model m = tiny_model(sets.features);
    TrainConfig cfg;
    cfg.max_steps = 7;
    const auto r = train(m, sets.train, sets.val, cfg);
    CHECK(r.steps == 7);
    CHECK(r.epochs_run == 3);
  }

  TEST_CASE("divergence reports the epoch") {
    const auto sets = synth_sets();
    Model m = tiny_model(sets.features);
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1e30;
    cfg.max_epochs = 5;
    try {
      train(m, sets.train, sets.val, cfg);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.epoch() >= 1);
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }

  TEST_CASE("feature mismatch and empty sets") {
    const auto sets = synth_sets();
    Model m = tiny_model(sets.features + 1);
    CHECK_THROWS_AS(train(m, sets.train, sets.val, TrainConfig{}), ShapeError);
    Model ok = tiny_model(sets.features);
    CHECK_THROWS_AS(train(ok, {}, sets.val, TrainConfig{}), ValidationError);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-exact") {
    const auto seqs = random_sequences(3, 4, 10, 30, 1);
    Model m = tiny_model(4, 3);
    // Move the running statistics away from their initial values.
    m.forward(make_batch(seqs, {0, 1, 2}), Mode::Train, 1);
    const std::string bytes = serialize_checkpoint(m);
    const Model back = deserialize_checkpoint(bytes);
    CHECK(back.config() == m.config());
    CHECK(state_bytes(back) == state_bytes(m));
    const auto batch = make_batch(seqs, {0, 1, 2});
    CHECK(back.predict(batch) == m.predict(batch));
    CHECK(serialize_checkpoint(back) == bytes);

    TempDir dir("ckpt");
    save_checkpoint(m, dir / "m.rfck");
    CHECK(state_bytes(load_checkpoint(dir / "m.rfck")) == state_bytes(m));
  }

  TEST_CASE("truncation and corruption are detected") {
    const std::string bytes = serialize_checkpoint(tiny_model(4));
    for (std::size_t keep : {std::size_t{0}, std::size_t{7}, std::size_t{20}, bytes.size() / 2,
                             bytes.size() - 1}) {
      CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, keep)), CorruptionError);
    }
    for (std::size_t pos : {std::size_t{0}, std::size_t{9}, bytes.size() / 3, bytes.size() - 20}) {
      std::string bad = bytes;
      bad[pos] = static_cast<char>(bad[pos] ^ 0x5a);
      CHECK_THROWS_AS(deserialize_checkpoint(bad), CorruptionError);
    }
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), CorruptionError);
  }

  TEST_CASE("architecture mismatch") {
    const std::string bytes = serialize_checkpoint(tiny_model(4));
    CHECK_NOTHROW(deserialize_checkpoint(bytes, model_preset("tiny", 4)));
    CHECK_THROWS_AS(deserialize_checkpoint(bytes, model_preset("paper-rf125", 4)),
                    ConfigMismatchError);
  }

  TEST_CASE("missing file") {
    TempDir dir("ckpt_missing");
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.rfck"), NotFoundError);
  }
}
