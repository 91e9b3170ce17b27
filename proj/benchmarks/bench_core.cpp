#include <benchmark/benchmark.h>

#include "asalab/corpus.hpp"
#include "asalab/numkit.hpp"
#include "asalab/reweight.hpp"
#include "asalab/rng.hpp"
#include "asalab/trainer.hpp"

namespace {

using namespace asalab;

std::vector<corpus::Instance> make_batch(int dim, int count) {
  Rng rng(42);
  std::vector<corpus::Instance> batch;
  for (int i = 0; i < count; ++i) {
    corpus::Instance inst;
    inst.id = "bench" + std::to_string(i);
    inst.label = 1 + static_cast<int>(rng.uniform_int(0, 4));
    inst.level = inst.label;
    inst.origin = i % 2 == 0 ? corpus::Origin::kReal : corpus::Origin::kSynthesized;
    inst.prompt_id = "topic_a";
    inst.features.resize(static_cast<std::size_t>(dim));
    for (double& v : inst.features) v = rng.normal();
    batch.push_back(std::move(inst));
  }
  return batch;
}

void BM_Forward(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const numkit::Model model(dim, {32}, 5, 1);
  Rng rng(7);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (double& v : x) v = rng.normal();
  for (auto _ : state) {
    auto probs = numkit::forward(model, x);
    benchmark::DoNotOptimize(probs);
  }
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(256);

void BM_Backward(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const numkit::Model model(dim, {32}, 5, 1);
  Rng rng(7);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (double& v : x) v = rng.normal();
  std::vector<double> upstream(5);
  for (double& v : upstream) v = rng.normal();
  for (auto _ : state) {
    auto grad = numkit::backward(model, x, upstream);
    benchmark::DoNotOptimize(grad);
  }
}
BENCHMARK(BM_Backward)->Arg(16)->Arg(64)->Arg(256);

void BM_AdamwStep(benchmark::State& state) {
  numkit::Model model(64, {32}, 5, 1);
  numkit::OptimState optim = numkit::make_optim_state(model, 1e-3);
  Rng rng(7);
  std::vector<double> x(64);
  for (double& v : x) v = rng.normal();
  std::vector<double> upstream(5);
  for (double& v : upstream) v = rng.normal();
  const numkit::Gradient grad = numkit::backward(model, x, upstream);
  for (auto _ : state) {
    numkit::adamw_step(model, optim, grad);
    benchmark::DoNotOptimize(model);
  }
}
BENCHMARK(BM_AdamwStep);

void BM_BatchLossGradient(benchmark::State& state) {
  const bool detach = state.range(0) == 1;
  const numkit::Model quality(16, {32}, 5, 1);
  const numkit::Model target(16, {32}, 5, 2);
  const auto batch = make_batch(16, 16);
  reweight::ReweightConfig config;
  config.detach_ratio = detach;
  for (auto _ : state) {
    auto grad = reweight::batch_loss_gradient(quality, target, batch, config);
    benchmark::DoNotOptimize(grad);
  }
}
BENCHMARK(BM_BatchLossGradient)->Arg(1)->Arg(0);

void BM_GenerateBenchmark(benchmark::State& state) {
  corpus::BenchmarkSpec spec;
  for (auto _ : state) {
    auto ds = corpus::generate_benchmark(spec);
    benchmark::DoNotOptimize(ds);
  }
}
BENCHMARK(BM_GenerateBenchmark);

void BM_ExperimentCell(benchmark::State& state) {
  corpus::BenchmarkSpec spec;
  spec.train_counts = {0, 16, 36, 30, 10};
  spec.validation_counts = {0, 3, 6, 5, 2};
  spec.seen_test_counts = {0, 3, 6, 5, 2};
  spec.unseen_test_counts = {0, 8, 16, 13, 5};
  const corpus::Dataset ds = corpus::generate_benchmark(spec);
  trainer::ExperimentParams params;
  params.quality_plan.stage = trainer::Stage::kQuality;
  params.target_plan.stage = trainer::Stage::kTarget;
  params.target_plan.reweight = reweight::ReweightConfig{};
  params.reweight = reweight::ReweightConfig{};
  params.hidden_width = 16;
  for (auto _ : state) {
    auto cell = trainer::run_experiment_cell(ds, trainer::Variant::kMixA2, 1, params);
    benchmark::DoNotOptimize(cell);
  }
}
BENCHMARK(BM_ExperimentCell);

void BM_MockGenerate(benchmark::State& state) {
  corpus::BenchmarkSpec spec;
  spec.train_counts = {0, 16, 36, 30, 10};
  spec.validation_counts = {0, 3, 6, 5, 2};
  spec.seen_test_counts = {0, 3, 6, 5, 2};
  spec.unseen_test_counts = {0, 8, 16, 13, 5};
  const corpus::Dataset ds = corpus::generate_benchmark(spec);
  const corpus::PromptBundle bundle =
      corpus::build_prompt("Give your opinion.", 3, ds.transcripts, 10, 1.5, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto text = corpus::mock_generate(bundle, seed++);
    benchmark::DoNotOptimize(text);
  }
}
BENCHMARK(BM_MockGenerate);

}  // namespace

BENCHMARK_MAIN();
