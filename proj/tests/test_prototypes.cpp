#include <doctest.h>

#include <vector>

#include "comet/error.hpp"
#include "comet/network.hpp"
#include "comet/prototypes.hpp"
#include "comet/pseudo.hpp"
#include "comet/tensor.hpp"

using comet::Error;
using comet::num::Tensor;
using comet::proto::BankMode;
using comet::proto::PrototypeBank;
using comet::pseudo::PseudoLabel;
using comet::pseudo::Tag;

namespace {

std::vector<PseudoLabel> tags(std::initializer_list<std::pair<Tag, std::size_t>> list) {
  std::vector<PseudoLabel> out;
  for (auto [t, c] : list) out.push_back(PseudoLabel{t, c});
  return out;
}

}  // namespace

TEST_CASE("frozen bank holds exact class means") {
  Tensor feats = Tensor::matrix(4, 2, {1, 0,  //
                                       3, 0,  //
                                       0, 5,  //
                                       0, 7});
  std::vector<std::size_t> labels = {0, 0, 1, 1};
  PrototypeBank bank = PrototypeBank::from_source_features(feats, labels, 2);

  CHECK(bank.mode() == BankMode::FrozenSource);
  CHECK(bank.has(0));
  CHECK(bank.has(1));
  Tensor p0 = bank.prototype(0);
  CHECK(p0.data == std::vector<double>{2.0, 0.0});
  Tensor p1 = bank.prototype(1);
  CHECK(p1.data == std::vector<double>{0.0, 6.0});
}

TEST_CASE("class means are permutation invariant") {
  Tensor a = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::matrix(3, 2, {5, 6, 1, 2, 3, 4});
  PrototypeBank ba = PrototypeBank::from_source_features(a, {0, 0, 0}, 1);
  PrototypeBank bb = PrototypeBank::from_source_features(b, {0, 0, 0}, 1);
  CHECK(ba.prototype(0).data == bb.prototype(0).data);
}

TEST_CASE("a source class without samples is an error") {
  Tensor feats = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK_THROWS_AS(PrototypeBank::from_source_features(feats, {0, 0}, 2), Error);
}

TEST_CASE("frozen banks reject accumulation") {
  Tensor feats = Tensor::matrix(2, 2, {1, 2, 3, 4});
  PrototypeBank bank = PrototypeBank::from_source_features(feats, {0, 1}, 2);
  auto labels = tags({{Tag::Known, 0}, {Tag::Known, 1}});
  CHECK_THROWS_AS(bank.accumulate(feats, labels), Error);
}

TEST_CASE("running bank fills class by class") {
  PrototypeBank bank(BankMode::RunningTarget, 3, 2);
  CHECK(!bank.has(0));
  CHECK(!bank.has(2));
  CHECK_THROWS_AS(bank.prototype(0), Error);

  Tensor batch1 = Tensor::matrix(3, 2, {2, 0,  //
                                        4, 0,  //
                                        9, 9});
  // the Unknown and Uncertain rows must not enter any class sum
  bank.accumulate(batch1, tags({{Tag::Known, 0}, {Tag::Known, 0}, {Tag::Unknown, 0}}));
  CHECK(bank.has(0));
  CHECK(!bank.has(1));
  CHECK(bank.prototype(0).data == std::vector<double>{3.0, 0.0});
  CHECK(bank.counts()[0] == 2);

  Tensor batch2 = Tensor::matrix(2, 2, {8, 0,  //
                                        1, 7});
  bank.accumulate(batch2, tags({{Tag::Known, 0}, {Tag::Uncertain, 1}}));
  // running mean over everything accumulated so far: (2+4+8)/3
  CHECK(bank.prototype(0).data[0] == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
  CHECK(bank.prototype(0).data[1] == 0.0);
  CHECK(bank.counts()[0] == 3);
  CHECK(!bank.has(1));
}

TEST_CASE("restore reproduces bank state") {
  PrototypeBank bank(BankMode::RunningTarget, 2, 2);
  Tensor feats = Tensor::matrix(2, 2, {1, 2, 3, 4});
  bank.accumulate(feats, tags({{Tag::Known, 0}, {Tag::Known, 1}}));

  PrototypeBank copy = PrototypeBank::restore(bank.mode(), bank.sums(),
                                              bank.counts());
  CHECK(copy.classes() == bank.classes());
  CHECK(copy.prototype(0).data == bank.prototype(0).data);
  CHECK(copy.prototype(1).data == bank.prototype(1).data);
}

TEST_CASE("prototypes run the real feature extractor") {
  comet::model::NetworkConfig cfg;
  cfg.input_dim = 3;
  cfg.feature_dim = 4;
  cfg.num_known_classes = 2;
  auto model = comet::model::ComposedModel::init(cfg, 31);

  Tensor inputs = Tensor::matrix(4, 3, {1, 0, 0,  //
                                        1, 0, 0,  //
                                        0, 2, 0,  //
                                        0, 0, 3});
  std::vector<std::size_t> labels = {0, 0, 1, 1};
  PrototypeBank bank = comet::proto::compute_source_prototypes(model, inputs, labels);

  Tensor feats = comet::model::forward_features(model, inputs);
  for (std::size_t c = 0; c < 2; ++c) {
    Tensor proto = bank.prototype(c);
    for (std::size_t k = 0; k < cfg.feature_dim; ++k) {
      const double mean = (feats.at(2 * c, k) + feats.at(2 * c + 1, k)) / 2.0;
      CHECK(proto.data[k] == doctest::Approx(mean).epsilon(1e-15));
    }
  }
}
