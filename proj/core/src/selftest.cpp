#include "comet/selftest.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>

#include "comet/checkpoint.hpp"
#include "comet/error.hpp"
#include "comet/gradcheck.hpp"
#include "comet/losses.hpp"
#include "comet/network.hpp"
#include "comet/optimizer.hpp"
#include "comet/prototypes.hpp"
#include "comet/pseudo.hpp"
#include "comet/reference.hpp"
#include "comet/rng.hpp"
#include "comet/tape.hpp"

namespace comet::selftest {

namespace {

CheckResult run_check(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [ok, detail] = body();
    return CheckResult{name, ok, detail};
  } catch (const std::exception& e) {
    return CheckResult{name, false, std::string("exception: ") + e.what()};
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

std::pair<bool, std::string> contrastive_vs_reference() {
  Rng rng(derive_seed(7, "selftest.oracle"));
  const double tau = 0.1;
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t nk = rng.index(5);       // 0..4 known samples
    const std::size_t nu = rng.index(4);       // 0..3 unknown samples
    const std::size_t dim = 3;
    const std::size_t m = nk + nu;
    if (m == 0) continue;

    num::Tensor proj = num::Tensor::zeros({m, dim});
    for (double& v : proj.data) v = rng.normal();
    std::vector<loss::LayoutEntry> entries;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (std::size_t i = 0; i < m; ++i) {
      const bool known = i < nk;
      const std::size_t cls = known ? rng.index(3) : 0;
      entries.push_back({known, cls});
      rows.push_back(std::vector<double>(proj.data.begin() + static_cast<long>(i * dim),
                                         proj.data.begin() + static_cast<long>((i + 1) * dim)));
      labels.push_back(known ? static_cast<int>(cls) : -1);
    }
    const double got = loss::contrastive_loss_value(proj, entries, tau);
    const double want = ref::naive_contrastive(rows, labels, tau);
    worst = std::max(worst, std::abs(got - want));
  }
  return {worst <= 1e-8, "max |impl - reference| = " + fmt(worst)};
}

std::pair<bool, std::string> contrastive_hand_value() {
  // Three identical known rows of one class: every anchor sees two equal
  // positives among two equal denominators, so each contributes ln 2.
  num::Tensor proj = num::Tensor::matrix(3, 4,
                                         {2.0, 0.0, 0.0, 0.0,
                                          2.0, 0.0, 0.0, 0.0,
                                          2.0, 0.0, 0.0, 0.0});
  const std::vector<loss::LayoutEntry> entries = {{true, 0}, {true, 0}, {true, 0}};
  const double got = loss::contrastive_loss_value(proj, entries, 0.1);
  const double want = 3.0 * std::log(2.0);
  const double err = std::abs(got - want);
  return {err <= 1e-9, "|value - 3 ln 2| = " + fmt(err)};
}

std::pair<bool, std::string> entropy_cases() {
  const double uniform7 = pseudo::normalized_entropy(
      num::Tensor::vector(std::vector<double>(7, 1.0 / 7.0)));
  if (uniform7 != 1.0) return {false, "uniform vector gave " + fmt(uniform7)};
  const double onehot = pseudo::normalized_entropy(
      num::Tensor::vector({0.0, 0.0, 1.0, 0.0, 0.0}));
  if (onehot != 0.0) return {false, "one-hot vector gave " + fmt(onehot)};

  Rng rng(derive_seed(7, "selftest.entropy"));
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.index(9);
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& v : p) {
      v = rng.uniform();
      sum += v;
    }
    for (double& v : p) v /= sum;
    const double h = pseudo::normalized_entropy(p.data(), k);
    if (h < 0.0 || h > 1.0) return {false, "entropy out of range: " + fmt(h)};
  }
  return {true, "uniform -> 1, one-hot -> 0, 200 random vectors in range"};
}

std::pair<bool, std::string> entropy_loss_value() {
  const num::Tensor probs = num::Tensor::matrix(2, 2, {0.5, 0.5, 1.0, 0.0});
  const std::vector<pseudo::PseudoLabel> labels = {
      {pseudo::Tag::Known, 0}, {pseudo::Tag::Unknown, 0}};
  const double direct = loss::entropy_loss(probs, labels);

  num::Tape tape;
  const num::ValueId node = loss::entropy_loss_node(tape, tape.constant(probs), labels);
  const double staged = tape.value(node).scalar_value();

  const double err = std::max(std::abs(direct - 0.5), std::abs(staged - 0.5));
  return {err <= 1e-12, "|value - 1/2| = " + fmt(err)};
}

std::pair<bool, std::string> ema_closed_form() {
  model::NetworkConfig net;
  net.input_dim = 3;
  net.feature_dim = 6;
  net.num_known_classes = 3;
  net.projection_dim = 4;
  net.g_hidden = {5};
  net.proj_hidden = 5;

  const model::ComposedModel w0 = model::ComposedModel::init(net, 3);
  const model::ComposedModel s = model::ComposedModel::init(net, 9);
  model::StudentTeacherPair pair{s, w0};

  const double alpha = 0.999;
  double worst = 0.0;
  std::size_t t = 0;
  for (const std::size_t stop : {std::size_t{1}, std::size_t{10}, std::size_t{1000}}) {
    for (; t < stop; ++t) model::ema_update(pair, alpha);
    const double at = std::pow(alpha, static_cast<double>(stop));
    for (const auto& [name, tensor] : pair.teacher.params) {
      const num::Tensor& init = w0.params.at(name);
      const num::Tensor& student = s.params.at(name);
      for (std::size_t i = 0; i < tensor.data.size(); ++i) {
        const double want = at * init.data[i] + (1.0 - at) * student.data[i];
        worst = std::max(worst, std::abs(tensor.data[i] - want));
      }
    }
  }
  return {worst <= 1e-10, "max drift from closed form = " + fmt(worst)};
}

std::pair<bool, std::string> sgd_unroll() {
  num::ParameterSet params;
  params.emplace("w", num::Tensor::vector({0.0}));
  num::SgdMomentum opt(params, 1.0, 0.9);
  num::GradientRecord grads;
  grads.emplace("w", num::Tensor::vector({1.0}));
  opt.step(params, grads);
  opt.step(params, grads);
  const double err = std::abs(params.at("w").data[0] + 2.9);
  return {err <= 1e-15, "|w2 + 2.9| = " + fmt(err)};
}

std::pair<bool, std::string> gradcheck_spot() {
  model::NetworkConfig net;
  net.input_dim = 3;
  net.feature_dim = 8;
  net.num_known_classes = 3;
  net.projection_dim = 4;
  net.g_hidden = {8};
  net.proj_hidden = 8;
  const model::ComposedModel m = model::ComposedModel::init(net, 42);

  Rng rng(derive_seed(42, "selftest.grad"));
  const auto random_matrix = [&](std::size_t r, std::size_t c) {
    num::Tensor t = num::Tensor::zeros({r, c});
    for (double& v : t.data) v = rng.normal();
    return t;
  };
  const num::Tensor kx = random_matrix(3, 3);
  const num::Tensor ux = random_matrix(2, 3);
  num::Tensor kj = kx;
  for (double& v : kj.data) v += 0.05 * rng.normal();
  num::Tensor uj = ux;
  for (double& v : uj.data) v += 0.05 * rng.normal();
  const std::vector<std::size_t> kcls = {0, 0, 1};
  const num::Tensor all = num::concat_rows({kx, ux});
  const std::vector<pseudo::PseudoLabel> labels = {
      {pseudo::Tag::Known, 0}, {pseudo::Tag::Known, 0}, {pseudo::Tag::Known, 1},
      {pseudo::Tag::Unknown, 0}, {pseudo::Tag::Unknown, 0}};

  const num::Tensor proto_feats = random_matrix(3, 8);
  const proto::PrototypeBank bank =
      proto::PrototypeBank::from_source_features(proto_feats, {0, 1, 2}, 3);

  const auto total_at = [&](const model::ComposedModel& model, num::GradientRecord* grads) {
    num::Tape tape;
    const model::StagedModel staged = model::stage(tape, model, grads != nullptr);
    const num::ValueId x = tape.constant(all);
    const num::ValueId feats = model::features_node(tape, staged, x);
    const num::ValueId logits = model::logits_node(tape, staged, feats);
    const num::ValueId probs = tape.softmax(logits);
    const loss::ContrastiveLayout layout =
        loss::build_layout(tape, staged, kx, kj, kcls, ux, uj, bank);
    const num::ValueId lc = loss::contrastive_loss(tape, layout, 0.1);
    const num::ValueId le = loss::entropy_loss_node(tape, probs, labels);
    const num::ValueId total = tape.add(lc, tape.scale(le, 0.1));
    const double value = tape.value(total).scalar_value();
    if (grads != nullptr) {
      tape.backward(total);
      for (const auto& [name, id] : staged.ids) grads->emplace(name, tape.grad(id));
    }
    return value;
  };

  num::GradientRecord analytic;
  total_at(m, &analytic);

  num::GradCheckOptions opts;
  opts.max_coords = 30;
  opts.subset_seed = 11;
  const num::GradCheckReport report = num::finite_difference_check(
      [&](const num::ParameterSet& p) {
        const model::ComposedModel probe{net, p};
        return total_at(probe, nullptr);
      },
      m.params, analytic, opts);
  return {report.passed, "max rel err " + fmt(report.max_rel_error) + " over " +
                             std::to_string(report.coords_checked) + " coords (worst " +
                             report.worst_coordinate + ")"};
}

std::pair<bool, std::string> archive_roundtrip() {
  Rng rng(derive_seed(7, "selftest.archive"));
  io::Archive a;
  a.ints["answer"] = 42;
  a.ints["negative"] = -3;
  num::Tensor t1 = num::Tensor::zeros({3, 4});
  for (double& v : t1.data) v = rng.normal();
  num::Tensor t2 = num::Tensor::zeros({5});
  for (double& v : t2.data) v = rng.normal();
  a.tensors["first"] = t1;
  a.tensors["second"] = t2;

  const std::string bytes = a.serialize();
  const io::Archive b = io::Archive::deserialize(bytes);
  if (b.serialize() != bytes) return {false, "re-serialization changed bytes"};
  if (b.ints != a.ints) return {false, "integer entries changed"};
  for (const auto& [name, tensor] : a.tensors) {
    const num::Tensor& back = b.tensors.at(name);
    if (back.shape != tensor.shape ||
        std::memcmp(back.data.data(), tensor.data.data(),
                    tensor.data.size() * sizeof(double)) != 0) {
      return {false, "tensor '" + name + "' not bit-identical"};
    }
  }
  return {true, std::to_string(bytes.size()) + " bytes round-tripped bit-exactly"};
}

}  // namespace

std::vector<CheckResult> run_all() {
  std::vector<CheckResult> results;
  results.push_back(run_check("contrastive-vs-reference", contrastive_vs_reference));
  results.push_back(run_check("contrastive-hand-value", contrastive_hand_value));
  results.push_back(run_check("entropy-cases", entropy_cases));
  results.push_back(run_check("entropy-loss-value", entropy_loss_value));
  results.push_back(run_check("teacher-update-closed-form", ema_closed_form));
  results.push_back(run_check("optimizer-unroll", sgd_unroll));
  results.push_back(run_check("gradient-spot-check", gradcheck_spot));
  results.push_back(run_check("archive-roundtrip", archive_roundtrip));
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

}  // namespace comet::selftest
