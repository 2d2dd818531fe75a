#include <benchmark/benchmark.h>

#include <vector>

#include "halunet/layers.hpp"
#include "halunet/metrics.hpp"
#include "halunet/model.hpp"
#include "halunet/synth.hpp"
#include "halunet/trainer.hpp"

using namespace halunet;

namespace {

Dataset bench_data(int n) {
  SynthConfig cfg;
  cfg.n_records = n;
  cfg.seed = 5;
  return generate(cfg);
}

ModelConfig preset_config(int which) {
  const std::vector<Feature> all{Feature::kLogLikelihood, Feature::kEntropy, Feature::kEmbedding};
  const auto preset = static_cast<EncoderPreset>(which % 3);
  const auto fusion = which < 3 ? FusionKind::kConcatMlp : FusionKind::kAttention;
  return ModelConfig::from_preset(preset, all, fusion, 32);
}

// Single-record inference; items/s is records per second.
void BM_Forward(benchmark::State& state) {
  const auto cfg = preset_config(static_cast<int>(state.range(0)));
  const Dataset ds = bench_data(256);
  Rng rng(1);
  const auto params = init_params<float>(cfg, rng);
  Tape<float> tape;
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& r = ds.records[i++ % ds.size()];
    benchmark::DoNotOptimize(forward(make_input(r, cfg), params, cfg, &tape).logit);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
  state.SetLabel(to_string(static_cast<EncoderPreset>(state.range(0) % 3)) + "/" +
                 to_string(cfg.fusion));
}
BENCHMARK(BM_Forward)->DenseRange(0, 5);

// One optimizer step on a batch of 32: forward + backward per record, AdamW.
void BM_TrainStep(benchmark::State& state) {
  const ModelConfig cfg;
  const Dataset ds = bench_data(32);
  Rng rng(2);
  auto params = init_params<float>(cfg, rng);
  TrainConfig tcfg;
  Tape<float> tape;
  int t = 0;
  for (auto _ : state) {
    for (const auto& r : ds.records) {
      const auto res = forward(make_input(r, cfg), params, cfg, &tape);
      backward(tape, bce_grad(res.logit, r.label) / 32.0f, params, cfg);
    }
    adamw_step(params, tcfg, ++t);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 32);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Conv1d(benchmark::State& state) {
  const int len = 50, c_in = static_cast<int>(state.range(0)), c_out = 64;
  Rng rng(3);
  std::vector<float> x(len * c_in), K(c_out * c_in * 3), b(c_out), col(len * c_in * 3),
      y(len * c_out);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  for (auto& v : K) v = static_cast<float>(rng.normal());
  for (auto _ : state) {
    conv1d_forward<float>(x, len, c_in, K, b, c_out, col, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv1d)->Arg(1)->Arg(32)->Arg(64);

void BM_Evaluate(benchmark::State& state) {
  Rng rng(4);
  ScoredSet set;
  for (int i = 0; i < state.range(0); ++i) {
    set.push_back({"r" + std::to_string(i), rng.uniform(), static_cast<int>(rng.below(2))});
  }
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(set, {}).auroc);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Evaluate)->Arg(2000)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
