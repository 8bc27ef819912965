// Microbenchmarks for the hot paths: recorded forward/backward passes, the
// contrastive objective at stream batch shapes, and one full adaptation step.

#include <benchmark/benchmark.h>

#include <vector>

#include "comet/engine.hpp"
#include "comet/losses.hpp"
#include "comet/network.hpp"
#include "comet/pseudo.hpp"
#include "comet/rng.hpp"
#include "comet/scenario.hpp"
#include "comet/stream.hpp"
#include "comet/tape.hpp"

namespace {

comet::scenario::ScenarioConfig bench_scenario() {
  comet::scenario::ScenarioConfig cfg;
  cfg.name = "bench";
  cfg.seed = 11;
  cfg.split.shared = 6;
  cfg.split.source_private = 3;
  cfg.split.target_private = 3;
  cfg.input_dim = 12;
  cfg.transform.rotations_deg = {30, 30, 30, 30, 30, 30};
  cfg.transform.axis_scale = {1.2};
  cfg.transform.translation_scale = 1.0;
  cfg.transform.match_source_noise = true;
  cfg.pretrain.max_epochs = 3;
  cfg.stream.num_batches = 4;
  cfg.validate();
  return cfg;
}

comet::num::Tensor random_matrix(std::size_t r, std::size_t c, comet::Rng& rng) {
  comet::num::Tensor t = comet::num::Tensor::zeros({r, c});
  for (double& v : t.data) v = rng.normal();
  return t;
}

void forward_backward(benchmark::State& state) {
  const comet::scenario::ScenarioConfig cfg = bench_scenario();
  const comet::model::ComposedModel m =
      comet::model::ComposedModel::init(cfg.network_config(), 1);
  comet::Rng rng(2);
  const comet::num::Tensor x =
      random_matrix(static_cast<std::size_t>(state.range(0)), cfg.input_dim, rng);
  for (auto _ : state) {
    comet::num::Tape tape;
    const comet::model::StagedModel staged = comet::model::stage(tape, m, true);
    const comet::num::ValueId logits =
        comet::model::logits_node(tape, staged,
                                  comet::model::features_node(tape, staged, tape.constant(x)));
    const comet::num::ValueId loss = tape.mean_all(tape.softmax(logits));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(staged.ids.at("g.w0")).data.data());
  }
}
BENCHMARK(forward_backward)->Arg(32)->Arg(128);

void contrastive_objective(benchmark::State& state) {
  const comet::scenario::ScenarioConfig cfg = bench_scenario();
  const comet::model::ComposedModel m =
      comet::model::ComposedModel::init(cfg.network_config(), 1);
  comet::Rng rng(3);
  const std::size_t known = static_cast<std::size_t>(state.range(0));
  const std::size_t unknown = known / 2;
  const comet::num::Tensor kx = random_matrix(known, cfg.input_dim, rng);
  const comet::num::Tensor kj = random_matrix(known, cfg.input_dim, rng);
  const comet::num::Tensor ux = random_matrix(unknown, cfg.input_dim, rng);
  const comet::num::Tensor uj = random_matrix(unknown, cfg.input_dim, rng);
  std::vector<std::size_t> classes(known);
  for (std::size_t i = 0; i < known; ++i) classes[i] = rng.index(cfg.split.source_classes());
  const comet::num::Tensor feats = random_matrix(cfg.split.source_classes(), cfg.feature_dim, rng);
  std::vector<std::size_t> labels(cfg.split.source_classes());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i;
  const comet::proto::PrototypeBank bank = comet::proto::PrototypeBank::from_source_features(
      feats, labels, cfg.split.source_classes());

  for (auto _ : state) {
    comet::num::Tape tape;
    const comet::model::StagedModel staged = comet::model::stage(tape, m, true);
    const comet::loss::ContrastiveLayout layout =
        comet::loss::build_layout(tape, staged, kx, kj, classes, ux, uj, bank);
    const comet::num::ValueId lc = comet::loss::contrastive_loss(tape, layout, 0.1);
    tape.backward(lc);
    benchmark::DoNotOptimize(tape.value(lc).scalar_value());
  }
}
BENCHMARK(contrastive_objective)->Arg(32)->Arg(64);

void adaptation_step(benchmark::State& state) {
  comet::scenario::ScenarioConfig cfg = bench_scenario();
  const comet::engine::PretrainResult pre = comet::engine::pretrain_source(cfg);
  comet::stream::TargetStream stream(cfg);
  const comet::stream::TargetBatch batch = stream.next();
  for (auto _ : state) {
    state.PauseTiming();
    comet::engine::Adapter adapter(pre.checkpoint, comet::engine::Variant::CometP, cfg);
    state.ResumeTiming();
    const comet::engine::StepOutcome out = adapter.step(batch.inputs, 0);
    benchmark::DoNotOptimize(out.total);
  }
}
BENCHMARK(adaptation_step)->Unit(benchmark::kMillisecond);

void entropy_assignment(benchmark::State& state) {
  comet::Rng rng(5);
  comet::num::Tensor probs = comet::num::Tensor::zeros({128, 9});
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      probs.at(r, c) = rng.uniform() + 1e-6;
      sum += probs.at(r, c);
    }
    for (std::size_t c = 0; c < probs.cols(); ++c) probs.at(r, c) /= sum;
  }
  const comet::pseudo::Thresholds thresholds;
  for (auto _ : state) {
    benchmark::DoNotOptimize(comet::pseudo::assign(probs, thresholds).size());
  }
}
BENCHMARK(entropy_assignment);

}  // namespace

BENCHMARK_MAIN();
