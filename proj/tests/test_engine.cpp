#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "comet/checkpoint.hpp"
#include "comet/engine.hpp"
#include "comet/error.hpp"
#include "comet/scenario.hpp"
#include "comet/stream.hpp"

using comet::Error;
using comet::engine::Adapter;
using comet::engine::RunResult;
using comet::engine::Variant;
using comet::num::Tensor;
using comet::scenario::ScenarioConfig;

namespace {

// Small enough that pretraining plus a full run stays in the millisecond
// range, with every regime ingredient present.
ScenarioConfig tiny_scenario() {
  ScenarioConfig cfg;
  cfg.name = "tiny";
  cfg.seed = 3;
  cfg.split.shared = 3;
  cfg.split.source_private = 1;
  cfg.split.target_private = 1;
  cfg.input_dim = 6;
  cfg.source.samples_per_class = 30;
  cfg.transform.rotations_deg = {20.0, 20.0, 20.0};
  cfg.transform.match_source_noise = true;
  cfg.stream.num_batches = 4;
  cfg.stream.batch_size = 24;
  cfg.stream.augment_sigma_scale = 1.0;
  cfg.pretrain.max_epochs = 30;
  cfg.pretrain.patience = 5;
  cfg.feature_dim = 12;
  cfg.projection_dim = 6;
  cfg.g_hidden = {16};
  cfg.proj_hidden = 8;
  cfg.hyper.learning_rate = 5e-4;
  cfg.hyper.momentum = 0.0;
  cfg.hyper.delta_l = 0.15;
  cfg.hyper.delta_u = 0.45;
  cfg.hyper.tau = 0.5;
  cfg.hyper.lambda = 10.0;
  cfg.hyper.alpha = 0.99;
  return cfg;
}

std::string params_bytes(const comet::model::ComposedModel& m) {
  comet::io::Archive ar;
  for (const auto& [name, value] : m.params) ar.tensors[name] = value;
  return ar.serialize();
}

}  // namespace

TEST_CASE("variant names round-trip") {
  for (Variant v : {Variant::SourceOnly, Variant::CometP, Variant::CometF}) {
    CHECK(comet::engine::parse_variant(comet::engine::variant_name(v)) == v);
  }
  CHECK_THROWS_AS(comet::engine::parse_variant("comet-x"), Error);
}

TEST_CASE("pretraining is deterministic and fits the source data") {
  ScenarioConfig cfg = tiny_scenario();
  auto r1 = comet::engine::pretrain_source(cfg);
  auto r2 = comet::engine::pretrain_source(cfg);

  CHECK(r1.epochs_run == r2.epochs_run);
  CHECK(r1.val_accuracy == r2.val_accuracy);
  CHECK(params_bytes(r1.checkpoint.model) == params_bytes(r2.checkpoint.model));
  CHECK(r1.checkpoint.bank.sums().data == r2.checkpoint.bank.sums().data);
  CHECK(r1.val_accuracy > 0.5);  // sanity: should be near-perfect on clean clusters
}

TEST_CASE("inference rejects by strict entropy comparison") {
  ScenarioConfig cfg = tiny_scenario();
  auto pre = comet::engine::pretrain_source(cfg);
  comet::stream::TargetStream stream(cfg);
  auto batch = stream.next();
  const std::size_t classes = cfg.split.source_classes();

  auto preds = comet::engine::infer(pre.checkpoint.model, batch.inputs, 0.5);
  REQUIRE(preds.size() == batch.truth.size());
  for (const auto& p : preds) {
    if (p.entropy > 0.5) {
      CHECK(p.label == classes);
    } else {
      CHECK(p.label < classes);
    }
  }

  // delta = 1 accepts everything; entropy never exceeds 1
  for (const auto& p : comet::engine::infer(pre.checkpoint.model, batch.inputs, 1.0)) {
    CHECK(p.label < classes);
  }
}

TEST_CASE("adapter refuses the frozen variant and mismatched checkpoints") {
  ScenarioConfig cfg = tiny_scenario();
  auto pre = comet::engine::pretrain_source(cfg);
  CHECK_THROWS_AS(Adapter(pre.checkpoint, Variant::SourceOnly, cfg), Error);

  ScenarioConfig other = cfg;
  other.feature_dim = 14;  // checkpoint architecture no longer matches
  CHECK_THROWS_AS(Adapter(pre.checkpoint, Variant::CometP, other), Error);
}

TEST_CASE("teacher stays frozen at alpha one while the student moves") {
  ScenarioConfig cfg = tiny_scenario();
  cfg.hyper.alpha = 1.0;
  auto pre = comet::engine::pretrain_source(cfg);
  Adapter adapter(pre.checkpoint, Variant::CometP, cfg);

  const std::string teacher_before = params_bytes(adapter.pair().teacher);
  // the projection head is redrawn at adaptation start, so compare g/h only
  // via the full student bytes after stepping instead
  comet::stream::TargetStream stream(cfg);
  const std::string student_before = params_bytes(adapter.pair().student);
  adapter.step(stream.next().inputs, 0);
  adapter.step(stream.next().inputs, 1);

  CHECK(params_bytes(adapter.pair().teacher) == teacher_before);
  CHECK(params_bytes(adapter.pair().student) != student_before);
}

TEST_CASE("a batch with no confident pseudo-labels leaves the student untouched") {
  ScenarioConfig cfg = tiny_scenario();
  // thresholds pinched so that every interior-entropy row lands in Uncertain
  cfg.hyper.delta_l = 0.0;
  cfg.hyper.delta_u = 1.0;
  auto pre = comet::engine::pretrain_source(cfg);
  Adapter adapter(pre.checkpoint, Variant::CometP, cfg);

  comet::stream::TargetStream stream(cfg);
  const std::string before = params_bytes(adapter.pair().student);
  auto outcome = adapter.step(stream.next().inputs, 0);

  if (outcome.tagged_known == 0 && outcome.tagged_unknown == 0) {
    CHECK(outcome.contrastive == 0.0);
    CHECK(outcome.entropy == 0.0);
    CHECK(params_bytes(adapter.pair().student) == before);
  } else {
    // exact-zero or exact-one entropy rows slipped through the pinch; the
    // step is then a real update and this run tells us nothing
    WARN("degenerate entropies in tiny scenario, no-op case not exercised");
  }
}

TEST_CASE("running banks start empty, frozen banks start full") {
  ScenarioConfig cfg = tiny_scenario();
  auto pre = comet::engine::pretrain_source(cfg);

  Adapter p(pre.checkpoint, Variant::CometP, cfg);
  CHECK(p.bank().mode() == comet::proto::BankMode::FrozenSource);
  for (std::size_t c = 0; c < cfg.split.source_classes(); ++c) CHECK(p.bank().has(c));

  Adapter f(pre.checkpoint, Variant::CometF, cfg);
  CHECK(f.bank().mode() == comet::proto::BankMode::RunningTarget);
  bool any = false;
  for (std::size_t c = 0; c < cfg.split.source_classes(); ++c) any |= f.bank().has(c);
  CHECK(!any);
}

TEST_CASE("run_experiment is byte-deterministic per variant") {
  ScenarioConfig cfg = tiny_scenario();
  for (Variant v : {Variant::SourceOnly, Variant::CometP, Variant::CometF}) {
    RunResult a = comet::engine::run_experiment(cfg, v);
    RunResult b = comet::engine::run_experiment(cfg, v);
    CHECK(comet::engine::run_record_lines(a) == comet::engine::run_record_lines(b));
    CHECK(comet::engine::run_summary_json(a) == comet::engine::run_summary_json(b));
  }
}

TEST_CASE("adaptation is causal: truncating the stream preserves the prefix") {
  ScenarioConfig full = tiny_scenario();
  ScenarioConfig cut = full;
  cut.stream.num_batches = 2;

  RunResult rf = comet::engine::run_experiment(full, Variant::CometP);
  RunResult rc = comet::engine::run_experiment(cut, Variant::CometP);

  REQUIRE(rf.batches.size() == full.stream.num_batches);
  REQUIRE(rc.batches.size() == cut.stream.num_batches);
  for (std::size_t t = 0; t < rc.batches.size(); ++t) {
    const auto& bf = rf.batches[t];
    const auto& bc = rc.batches[t];
    REQUIRE(bf.predictions.size() == bc.predictions.size());
    for (std::size_t i = 0; i < bf.predictions.size(); ++i) {
      CHECK(bf.predictions[i].label == bc.predictions[i].label);
      CHECK(bf.predictions[i].entropy == bc.predictions[i].entropy);
    }
    CHECK(bf.truth == bc.truth);
    CHECK(bf.total == bc.total);
  }
}

TEST_CASE("a shared checkpoint reproduces the in-process pretraining") {
  ScenarioConfig cfg = tiny_scenario();
  auto pre = comet::engine::pretrain_source(cfg);
  RunResult with_ckpt = comet::engine::run_experiment(cfg, Variant::CometP, &pre.checkpoint);
  RunResult inline_pre = comet::engine::run_experiment(cfg, Variant::CometP);
  CHECK(comet::engine::run_record_lines(with_ckpt) ==
        comet::engine::run_record_lines(inline_pre));
}

TEST_CASE("record files hit disk atomically and byte-identically") {
  namespace fs = std::filesystem;
  ScenarioConfig cfg = tiny_scenario();
  RunResult run = comet::engine::run_experiment(cfg, Variant::SourceOnly);

  fs::path dir = fs::temp_directory_path() / "comet_engine_test";
  fs::create_directories(dir);
  auto [record_bytes, summary_bytes] =
      comet::engine::write_run_record(run, dir, "probe");

  const std::string record = comet::io::read_file(dir / "probe.record.jsonl");
  const std::string summary = comet::io::read_file(dir / "probe.summary.json");
  CHECK(record.size() == record_bytes);
  CHECK(summary.size() == summary_bytes);
  CHECK(record == comet::engine::run_record_lines(run));
  CHECK(summary == comet::engine::run_summary_json(run));
  fs::remove_all(dir);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  namespace fs = std::filesystem;
  ScenarioConfig cfg = tiny_scenario();
  auto pre = comet::engine::pretrain_source(cfg);

  fs::path path = fs::temp_directory_path() / "comet_engine_test_ckpt.bin";
  pre.checkpoint.save(path);
  auto loaded = comet::io::Checkpoint::load(path);
  CHECK(params_bytes(loaded.model) == params_bytes(pre.checkpoint.model));
  CHECK(loaded.bank.sums().data == pre.checkpoint.bank.sums().data);
  CHECK(loaded.bank.counts() == pre.checkpoint.bank.counts());
  CHECK(loaded.model.config == pre.checkpoint.model.config);
  fs::remove(path);
}
