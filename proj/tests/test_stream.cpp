#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "comet/error.hpp"
#include "comet/rng.hpp"
#include "comet/scenario.hpp"
#include "comet/stream.hpp"

using comet::Error;
using comet::num::Tensor;
using comet::scenario::ScenarioConfig;
using comet::stream::TargetBatch;
using comet::stream::TargetStream;

namespace {

ScenarioConfig open_partial_config() {
  ScenarioConfig cfg;
  cfg.name = "t";
  cfg.seed = 11;
  cfg.split.shared = 3;
  cfg.split.source_private = 1;
  cfg.split.target_private = 2;
  cfg.input_dim = 8;
  cfg.source.samples_per_class = 40;
  cfg.stream.num_batches = 6;
  cfg.stream.batch_size = 32;
  return cfg;
}

}  // namespace

TEST_CASE("source dataset is balanced and grouped by class") {
  ScenarioConfig cfg = open_partial_config();
  auto ds = comet::stream::generate_source_dataset(cfg);

  const std::size_t classes = cfg.split.source_classes();
  REQUIRE(ds.inputs.rows() == classes * cfg.source.samples_per_class);
  REQUIRE(ds.inputs.cols() == cfg.input_dim);
  REQUIRE(ds.labels.size() == ds.inputs.rows());

  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    REQUIRE(ds.labels[i] < classes);
    counts[ds.labels[i]]++;
    // grouped: label index is i / samples_per_class
    CHECK(ds.labels[i] == i / cfg.source.samples_per_class);
  }
  for (std::size_t c = 0; c < classes; ++c) CHECK(counts[c] == cfg.source.samples_per_class);
}

TEST_CASE("class means honor the separation lower bound") {
  ScenarioConfig cfg = open_partial_config();
  Tensor means = comet::stream::class_means(cfg);
  REQUIRE(means.rows() == cfg.split.total_classes());
  const std::size_t n_src = cfg.split.source_classes();
  for (std::size_t a = 0; a < n_src; ++a) {
    for (std::size_t b = a + 1; b < n_src; ++b) {
      double d2 = 0;
      for (std::size_t k = 0; k < cfg.input_dim; ++k) {
        const double diff = means.at(a, k) - means.at(b, k);
        d2 += diff * diff;
      }
      CHECK(std::sqrt(d2) >= cfg.source.separation - 1e-9);
    }
  }
}

TEST_CASE("identity transform leaves samples untouched") {
  comet::scenario::TransformSpec spec;  // all defaults: no rotation, no shift
  REQUIRE(spec.is_identity());
  comet::stream::DomainShift shift(spec, 4, 1.0);
  CHECK(shift.identity());

  comet::Rng rng(5);
  double x[4] = {1.5, -2.0, 0.25, 8.0};
  double before[4];
  std::copy(x, x + 4, before);
  shift.apply(x, 4, rng);
  for (int i = 0; i < 4; ++i) CHECK(x[i] == before[i]);
}

TEST_CASE("rotation preserves norms and noise tracks the source sigma") {
  comet::scenario::TransformSpec spec;
  spec.rotations_deg = {90.0};
  comet::stream::DomainShift shift(spec, 2, 1.0);
  CHECK(!shift.identity());

  comet::Rng rng(5);
  double x[2] = {1.0, 0.0};
  shift.apply(x, 2, rng);
  // quarter turn in the (0,1) plane, no noise configured
  CHECK(std::abs(x[0]) < 1e-12);
  CHECK(std::abs(std::abs(x[1]) - 1.0) < 1e-12);
}

TEST_CASE("target stream batches are balanced draws from target classes only") {
  ScenarioConfig cfg = open_partial_config();
  TargetStream stream(cfg);
  REQUIRE(stream.batch_count() == cfg.stream.num_batches);
  REQUIRE(stream.batch_size() == cfg.stream.batch_size);

  const std::size_t unknown = comet::stream::unknown_label(cfg.split);
  std::set<std::size_t> seen;
  while (!stream.exhausted()) {
    TargetBatch b = stream.next();
    REQUIRE(b.inputs.rows() == cfg.stream.batch_size);
    REQUIRE(b.truth.size() == cfg.stream.batch_size);
    for (std::size_t t : b.truth) {
      // shared classes keep their source id, target-private collapses to the sentinel
      CHECK((t < cfg.split.shared || t == unknown));
      seen.insert(t);
    }
  }
  CHECK(seen.count(unknown) == 1);
}

TEST_CASE("a spent stream refuses another batch") {
  ScenarioConfig cfg = open_partial_config();
  cfg.stream.num_batches = 2;
  TargetStream stream(cfg);
  stream.next();
  stream.next();
  CHECK(stream.exhausted());
  CHECK_THROWS_AS(stream.next(), Error);
}

TEST_CASE("batch content depends on its index, not on stream length") {
  ScenarioConfig a = open_partial_config();
  ScenarioConfig b = open_partial_config();
  b.stream.num_batches = 3;  // shorter stream, same everything else

  TargetStream sa(a);
  TargetStream sb(b);
  for (std::size_t t = 0; t < 3; ++t) {
    TargetBatch ba = sa.next();
    TargetBatch bb = sb.next();
    CHECK(ba.inputs.data == bb.inputs.data);
    CHECK(ba.truth == bb.truth);
  }
}

TEST_CASE("two streams over the same scenario replay identically") {
  ScenarioConfig cfg = open_partial_config();
  TargetStream s1(cfg);
  TargetStream s2(cfg);
  while (!s1.exhausted()) {
    TargetBatch b1 = s1.next();
    TargetBatch b2 = s2.next();
    CHECK(b1.index == b2.index);
    CHECK(b1.inputs.data == b2.inputs.data);
    CHECK(b1.truth == b2.truth);
  }
}

TEST_CASE("augment jitters deterministically around the row") {
  Tensor row = Tensor::vector({1.0, 2.0, 3.0});
  comet::Rng r1(7);
  comet::Rng r2(7);
  Tensor j1 = comet::stream::augment(row, 0.5, r1);
  Tensor j2 = comet::stream::augment(row, 0.5, r2);
  CHECK(j1.data == j2.data);
  CHECK(j1.data != row.data);

  comet::Rng r3(8);
  Tensor none = comet::stream::augment(row, 0.0, r3);
  CHECK(none.data == row.data);
}
