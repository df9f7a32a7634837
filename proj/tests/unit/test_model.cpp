#include <cstring>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "grad_cases.hpp"
#include "properties.hpp"
#include "rulforge/model.hpp"
#include "rulforge/ops.hpp"

using namespace rulforge;
using rulforge::testing::random_sequences;

namespace {

TcnConfig with(int blocks, std::vector<int> dilations, PaddingMode mode = PaddingMode::CausalLeft) {
  TcnConfig c;
  c.num_blocks = blocks;
  c.dilations = std::move(dilations);
  c.padding_mode = mode;
  return c;
}

std::vector<float> flat_state(const Model& m) {
  std::vector<float> out;
  for (const auto& [name, t] : m.state()) out.insert(out.end(), t->vec().begin(), t->vec().end());
  return out;
}

Tensor<float> random_features(std::size_t B, std::size_t F, std::size_t L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor<float> x({B, F, L});
  for (auto& v : x.data()) v = n(rng);
  return x;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults follow the published architecture") {
    const TcnConfig c;
    CHECK(c.num_blocks == 4);
    CHECK(c.dilations == std::vector<int>{1, 2, 4, 8, 16});
    CHECK(c.kernel == 3);
    CHECK(c.channels == 200);
    CHECK(c.dropout == 0.3);
    CHECK(c.head_widths == std::vector<int>{100, 50, 25, 10, 1});
    CHECK(c.padding_mode == PaddingMode::CausalLeft);
  }

  TEST_CASE("presets") {
    CHECK(model_preset("paper-4block", 17) == [] {
      TcnConfig c;
      c.in_features = 17;
      return c;
    }());
    CHECK(model_preset("paper-rf125", 17).num_blocks == 2);
    const auto tiny = model_preset("tiny", 17);
    CHECK(tiny.num_blocks == 1);
    CHECK(tiny.channels == 16);
    CHECK(model_preset_names().size() == 3);
    CHECK_THROWS_AS(model_preset("huge", 17), ValidationError);
  }

  TEST_CASE("invalid configs are rejected") {
    auto bad = [](auto mutate) {
      TcnConfig c;
      mutate(c);
      CHECK_THROWS_AS(c.validate(), ValidationError);
      Rng rng(0);
      CHECK_THROWS_AS(Model(c, rng), ValidationError);
    };
    bad([](TcnConfig& c) { c.dilations.clear(); });
    bad([](TcnConfig& c) { c.dilations = {1, 0}; });
    bad([](TcnConfig& c) { c.head_widths = {10, 2}; });
    bad([](TcnConfig& c) { c.head_widths.clear(); });
    bad([](TcnConfig& c) { c.dropout = 1.0; });
    bad([](TcnConfig& c) { c.kernel = 0; });
    bad([](TcnConfig& c) { c.channels = 0; });
    bad([](TcnConfig& c) { c.num_blocks = 0; });
    bad([](TcnConfig& c) { c.in_features = 0; });
  }

  TEST_CASE("JSON round trip") {
    TcnConfig c = model_preset("tiny", 9);
    c.padding_mode = PaddingMode::Symmetric;
    CHECK(TcnConfig::from_json(c.to_json()) == c);
  }
}

TEST_SUITE("receptive field") {
  TEST_CASE("formula") {
    CHECK(compute_receptive_field(with(1, {1})) == 3);
    CHECK(compute_receptive_field(with(1, {1, 2, 4, 8, 16})) == 63);
    CHECK(compute_receptive_field(with(2, {1, 2, 4, 8, 16})) == 125);
    CHECK(compute_receptive_field(with(4, {1, 2, 4, 8, 16})) == 249);
    CHECK(compute_receptive_field(with(2, {1, 2, 4, 8, 16}, PaddingMode::Symmetric)) == 125);
    TcnConfig k5 = with(1, {1, 3});
    k5.kernel = 5;
    CHECK(compute_receptive_field(k5) == 17);
  }

  TEST_CASE("empirical probe matches the formula") {
    for (int blocks : {1, 2}) {
      TcnConfig c = model_preset("tiny", 4);
      c.num_blocks = blocks;
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto r = testing::probe_receptive_field(c, seed);
        INFO("blocks ", blocks, " seed ", seed);
        CHECK(r.agrees());
        CHECK(r.last_offset + 1 == static_cast<std::ptrdiff_t>(r.computed));
      }
    }
  }
}

TEST_SUITE("build_model") {
  TEST_CASE("default model uses 200 channels in every block") {
    Rng rng(0);
    Model m(TcnConfig{}, rng);
    std::size_t convs = 0;
    for (auto& [name, p] : m.parameters()) {
      if (name.find(".conv") != std::string::npos && name.ends_with(".weight")) {
        CHECK(p->value.dim(0) == 200);
        ++convs;
      }
    }
    CHECK(convs == 20);
  }

  TEST_CASE("same seed gives identical parameter bytes") {
    const auto cfg = model_preset("tiny", 6);
    Rng a(11), b(11), c(12);
    const auto sa = flat_state(Model(cfg, a));
    const auto sb = flat_state(Model(cfg, b));
    REQUIRE(sa.size() == sb.size());
    CHECK(std::memcmp(sa.data(), sb.data(), sa.size() * sizeof(float)) == 0);
    CHECK(flat_state(Model(cfg, c)) != sa);
  }

  TEST_CASE("initial weights lie within the fan-in bound") {
    Rng rng(3);
    Model m(model_preset("tiny", 6), rng);
    for (auto& [name, p] : m.parameters()) {
      if (name.find("norm") != std::string::npos) continue;
      const auto& s = p->value.shape();
      std::size_t fan_in = 1;
      if (name.ends_with(".weight")) {
        for (std::size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
      } else {
        continue;
      }
      const float bound = static_cast<float>(std::sqrt(1.0 / static_cast<double>(fan_in)));
      for (float v : p->value.data()) CHECK(std::abs(v) <= bound);
    }
  }

  TEST_CASE("parameter counts") {
    TcnConfig c = model_preset("tiny", 3);
    c.channels = 10;
    c.head_widths = {1};
    Rng rng(0);
    Model m(c, rng);
    std::size_t head = 0;
    for (auto& [name, p] : m.parameters())
      if (name.rfind("head0.", 0) == 0) head += p->value.size();
    CHECK(head == 11);

    Rng rng2(0);
    Model d(TcnConfig{}, rng2);
    std::size_t conv = 0;
    for (auto& [name, p] : d.parameters())
      if (name.rfind("block1.conv0.", 0) == 0) conv += p->value.size();
    CHECK(conv == 120200);
  }

  TEST_CASE("default model parameter count matches an architecture enumeration") {
    const int F = 17;
    TcnConfig cfg;
    cfg.in_features = F;
    Rng rng(0);
    Model m(cfg, rng);
    // Independent enumeration: conv (Cout*Cin*K + Cout), batchnorm (2*C),
    // skip projection on the first block, then the linear head.
    std::size_t expected = 0;
    int cin = F;
    for (int b = 0; b < cfg.num_blocks; ++b) {
      const int block_in = cin;
      for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
        expected += static_cast<std::size_t>(cfg.channels * cin * cfg.kernel + cfg.channels);
        expected += static_cast<std::size_t>(2 * cfg.channels);
        cin = cfg.channels;
      }
      if (block_in != cfg.channels)
        expected += static_cast<std::size_t>(cfg.channels * block_in + cfg.channels);
    }
    for (int w : cfg.head_widths) {
      expected += static_cast<std::size_t>(w * cin + w);
      cin = w;
    }
    CHECK(count_parameters(m) == expected);
    CHECK(count_parameters(m) == 2332496);
    std::size_t named = 0;
    for (auto& [name, p] : m.parameters()) named += p->value.size();
    CHECK(named == expected);
  }

  TEST_CASE("state names") {
    Rng rng(0);
    Model m(model_preset("tiny", 5), rng);
    std::vector<std::string> names;
    for (const auto& [n, t] : m.state()) names.push_back(n);
    auto has = [&](const std::string& n) {
      return std::find(names.begin(), names.end(), n) != names.end();
    };
    CHECK(has("block0.conv0.weight"));
    CHECK(has("block0.norm4.gamma"));
    CHECK(has("block0.norm0.running_var"));
    CHECK(has("block0.skip.weight"));
    CHECK(has("head4.bias"));
  }
}

TEST_SUITE("forward") {
  TEST_CASE("output shape and feature mismatch") {
    Rng rng(0);
    Model m(model_preset("tiny", 4), rng);
    const auto seqs = random_sequences(3, 4, 10, 30, 1);
    const auto batch = make_batch(seqs, {0, 1, 2});
    const auto y = m.forward(batch, Mode::Train, 5);
    CHECK(y.shape() == Shape{3, batch.max_length()});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = batch.lengths[i]; t < batch.max_length(); ++t) CHECK(y(i, t) == 0.0f);
    const auto wrong = random_sequences(1, 5, 10, 10, 1);
    CHECK_THROWS_AS(m.predict(make_batch(wrong, {0})), ShapeError);
  }

  TEST_CASE("duplicated sequence gets identical eval predictions") {
    Rng rng(1);
    Model m(model_preset("tiny", 4), rng);
    const auto seqs = random_sequences(2, 4, 25, 25, 2);
    const auto y = m.predict(make_batch(seqs, {0, 1, 0}));
    for (std::size_t t = 0; t < 25; ++t) CHECK(y(0, t) == y(2, t));
  }

  TEST_CASE("eval forward is pure") {
    Rng rng(2);
    Model m(model_preset("tiny", 4), rng);
    const auto batch = make_batch(random_sequences(4, 4, 10, 50, 3), {0, 1, 2, 3});
    const auto before = flat_state(m);
    const auto a = m.predict(batch);
    CHECK(m.predict(batch) == a);
    CHECK(m.forward(batch, Mode::Eval) == a);
    CHECK(flat_state(m) == before);
  }

  TEST_CASE("causal predictions ignore the future") {
    Rng rng(3);
    TcnConfig cfg = model_preset("tiny", 3);
    cfg.num_blocks = 2;
    Model m(cfg, rng);
    const std::size_t L = 80;
    const auto x = random_features(1, 3, L, 4);
    const auto full = m.predict(x, Mask({1, L}, 1));
    for (std::size_t t : {1, 17, 40, 79}) {
      Tensor<float> xt({1, 3, t});
      for (std::size_t f = 0; f < 3; ++f)
        for (std::size_t s = 0; s < t; ++s) xt(0, f, s) = x(0, f, s);
      const auto part = m.predict(xt, Mask({1, t}, 1));
      for (std::size_t s = 0; s < t; ++s) CHECK(part[s] == full[s]);
    }
  }

  TEST_CASE("zero block convolutions reduce each block to its skip path") {
    TcnConfig cfg = model_preset("tiny", 3);
    cfg.head_widths = {1};
    Rng rng(4);
    TcnModel<double> m(cfg, rng);
    Tensor<double>* skip_w = nullptr;
    Tensor<double>* skip_b = nullptr;
    Tensor<double>* head_w = nullptr;
    Tensor<double>* head_b = nullptr;
    for (auto& [name, p] : m.parameters()) {
      if (name.find(".conv") != std::string::npos) p->value.fill(0.0);
      if (name == "block0.skip.weight") skip_w = &p->value;
      if (name == "block0.skip.bias") skip_b = &p->value;
      if (name == "head0.weight") head_w = &p->value;
      if (name == "head0.bias") head_b = &p->value;
    }
    REQUIRE(skip_w);
    REQUIRE(head_w);
    const std::size_t L = 20;
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor<double> x({2, 3, L});
    for (auto& v : x.data()) v = n(gen);
    const Mask mask({2, L}, 1);
    const auto expected =
        pointwise_linear_forward(pointwise_linear_forward(x, *skip_w, *skip_b), *head_w, *head_b);
    for (Mode mode : {Mode::Eval, Mode::Train}) {
      const auto y = m.forward(x, mask, mode, 3);
      for (std::size_t i = 0; i < 2 * L; ++i)
        CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
  }
}

TEST_SUITE("gradients") {
  TEST_CASE("end-to-end finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      for (auto mode : {PaddingMode::CausalLeft, PaddingMode::Symmetric}) {
        const auto r = testing::check_end_to_end(seed, mode);
        INFO(r.name, " seed ", seed);
        CHECK(r.max_relative_error < 1e-3);
      }
    }
  }

  TEST_CASE("backward before forward is rejected") {
    Rng rng(0);
    Model m(model_preset("tiny", 2), rng);
    CHECK_THROWS_AS(m.backward(Tensor<float>({1, 4})), ValidationError);
  }

  TEST_CASE("doubling the padding changes nothing") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      for (auto mode : {PaddingMode::CausalLeft, PaddingMode::Symmetric}) {
        const auto r = testing::check_masking_absorption(seed, mode);
        INFO("seed ", seed, ": ", r.detail);
        CHECK(r.ok());
      }
    }
  }
}
