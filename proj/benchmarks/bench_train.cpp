#include <benchmark/benchmark.h>

#include "rulforge/dataset.hpp"
#include "rulforge/ops.hpp"
#include "rulforge/train.hpp"

using namespace rulforge;

namespace {

struct TrainFixture {
  std::vector<LabeledSequence> seqs;
  PaddedBatch batch;
  std::size_t features = 0;

  TrainFixture() {
    SynthConfig sc;
    sc.n_train = 8;
    const auto bundle = generate_synthetic(sc);
    const auto stats = fit_normalizer(bundle.train);
    for (const auto& t : bundle.train) seqs.push_back(make_labeled_sequence(stats, t));
    batch = make_batch(seqs, {0, 1, 2, 3, 4, 5, 6, 7});
    features = stats.retained_count();
  }
};

void train_step(benchmark::State& state, const char* preset) {
  static const TrainFixture fx;
  Rng rng(0);
  Model model(model_preset(preset, static_cast<int>(fx.features)), rng);
  std::vector<ParamTensor<float>*> params;
  for (auto& [name, p] : model.parameters()) params.push_back(p);
  Optimizer<float> opt(OptimizerKind::Adam, 1e-3);
  const Tensor<float> labels = fx.batch.labels.cast<float>();
  std::uint64_t seed = 0;
  for (auto _ : state) {
    model.zero_grad();
    const auto pred = model.forward(fx.batch, Mode::Train, ++seed);
    const auto loss = masked_mse_loss(pred, labels, fx.batch.target_mask);
    model.backward(loss.grad);
    opt.step(params);
    benchmark::DoNotOptimize(loss.loss);
  }
}

void BM_TrainStepTiny(benchmark::State& state) { train_step(state, "tiny"); }
BENCHMARK(BM_TrainStepTiny)->Unit(benchmark::kMillisecond);

void BM_TrainStep4Block(benchmark::State& state) { train_step(state, "paper-4block"); }
BENCHMARK(BM_TrainStep4Block)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace
