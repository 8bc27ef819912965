#include "comet/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "comet/error.hpp"
#include "comet/losses.hpp"
#include "comet/pseudo.hpp"
#include "comet/rng.hpp"
#include "comet/tape.hpp"

namespace comet::engine {

namespace {

using json = nlohmann::ordered_json;

void check(bool ok, const std::string& what) {
  if (!ok) {
    throw Error(Error::Code::InvalidArgument, "[hyperparams] " + what);
  }
}

}  // namespace

void HyperParams::validate() const {
  check(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  check(delta_l >= 0.0 && delta_l <= 1.0, "delta_l must lie in [0, 1]");
  check(delta_u >= 0.0 && delta_u <= 1.0, "delta_u must lie in [0, 1]");
  check(delta_l < delta_u, "delta_l must be strictly below delta_u");
  check(delta >= 0.0 && delta <= 1.0, "delta must lie in [0, 1]");
  check(tau > 0.0, "tau must be positive");
  check(lambda >= 0.0, "lambda must be nonnegative");
  check(learning_rate > 0.0, "learning_rate must be positive");
  check(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::SourceOnly:
      return "source-only";
    case Variant::CometP:
      return "comet-p";
    case Variant::CometF:
      return "comet-f";
  }
  throw Error(Error::Code::InvalidArgument, "[variant] unknown enum value");
}

Variant parse_variant(const std::string& name) {
  if (name == "source-only") return Variant::SourceOnly;
  if (name == "comet-p") return Variant::CometP;
  if (name == "comet-f") return Variant::CometF;
  throw Error(Error::Code::InvalidArgument,
              "[variant] unknown variant '" + name +
                  "'; expected source-only, comet-p or comet-f");
}

namespace {

num::Tensor gather_rows(const num::Tensor& m, const std::vector<std::size_t>& rows) {
  num::Tensor out = num::Tensor::zeros({rows.size(), m.cols()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      out.at(r, c) = m.at(rows[r], c);
    }
  }
  return out;
}

num::Tensor extract_row(const num::Tensor& m, std::size_t r) {
  std::vector<double> v(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) v[c] = m.at(r, c);
  return num::Tensor::vector(std::move(v));
}

// Jittered copy of every row, drawing in row order so the stream of normals
// is a pure function of the rows passed in.
num::Tensor jitter_rows(const num::Tensor& m, double sigma, Rng& rng) {
  num::Tensor out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    num::Tensor j = stream::augment(extract_row(m, r), sigma, rng);
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) = j.data[c];
  }
  return out;
}

struct ValScore {
  double accuracy = 0.0;
  double ce_loss = 0.0;
};

ValScore validation_score(const model::ComposedModel& m, const num::Tensor& x,
                          const std::vector<std::size_t>& y) {
  const num::Tensor feats = model::forward_features(m, x);
  const num::Tensor probs = model::forward_logits(m, feats).second;
  std::size_t hits = 0;
  double ce = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    if (pseudo::argmax_row(&probs.data[r * probs.cols()], probs.cols()) == y[r]) {
      ++hits;
    }
    ce -= std::log(std::max(probs.at(r, y[r]), 1e-12));
  }
  ValScore s;
  s.accuracy = y.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(y.size());
  s.ce_loss = y.empty() ? 0.0 : ce / static_cast<double>(y.size());
  return s;
}

// One cross-entropy minibatch update. Returns the loss value.
double cross_entropy_step(model::ComposedModel& m, num::SgdMomentum& opt,
                          const num::Tensor& x, const std::vector<std::size_t>& y,
                          std::size_t epoch) {
  num::Tape tape;
  const model::StagedModel staged = model::stage(tape, m, true);
  const num::ValueId xid = tape.constant(x);
  const num::ValueId feats = model::features_node(tape, staged, xid);
  const num::ValueId logits = model::logits_node(tape, staged, feats);
  const num::ValueId logp = tape.log_clamped(tape.softmax(logits));

  std::vector<num::IndexPair> pairs;
  std::vector<double> coeffs;
  pairs.reserve(y.size());
  const double w = -1.0 / static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    pairs.push_back({i, y[i]});
    coeffs.push_back(w);
  }
  const num::ValueId loss = tape.select_sum(logp, std::move(pairs), std::move(coeffs));

  const double value = tape.value(loss).scalar_value();
  if (!std::isfinite(value)) {
    throw Error(Error::Code::Diverged,
                "[pretrain] cross-entropy became non-finite in epoch " +
                    std::to_string(epoch));
  }
  tape.backward(loss);
  num::GradientRecord grads;
  for (const auto& [name, id] : staged.ids) {
    grads.emplace(name, tape.grad(id));
  }
  opt.step(m.params, grads);
  return value;
}

}  // namespace

PretrainResult pretrain_source(const scenario::ScenarioConfig& cfg) {
  cfg.validate();
  const stream::SourceDataset data = stream::generate_source_dataset(cfg);
  const std::size_t n = data.labels.size();

  model::ComposedModel m =
      model::ComposedModel::init(cfg.network_config(), derive_seed(cfg.seed, "model-init"));

  // Holdout split, fixed by the scenario seed alone.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(cfg.seed, "pretrain.split"));
  split_rng.shuffle(order);
  const std::size_t val_n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.pretrain.val_fraction * static_cast<double>(n))));
  if (val_n >= n) {
    throw Error(Error::Code::InvalidArgument,
                "[pretrain] validation split leaves no training data");
  }
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(val_n));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(val_n), order.end());

  const num::Tensor val_x = gather_rows(data.inputs, val_idx);
  std::vector<std::size_t> val_y(val_n);
  for (std::size_t i = 0; i < val_n; ++i) val_y[i] = data.labels[val_idx[i]];

  num::SgdMomentum opt(m.params, cfg.pretrain.learning_rate, cfg.hyper.momentum);

  // Early stopping watches the accuracy plateau; among equal-accuracy
  // checkpoints the one with the lowest validation cross-entropy is kept,
  // so a task whose accuracy saturates early still ends well-calibrated.
  ValScore best = validation_score(m, val_x, val_y);
  num::ParameterSet best_params = m.params;
  std::size_t epochs_run = 0;
  std::size_t stale = 0;
  for (std::size_t e = 0; e < cfg.pretrain.max_epochs; ++e) {
    Rng epoch_rng(derive_seed(cfg.seed, "pretrain.epoch", e));
    std::vector<std::size_t> idx = train_idx;
    epoch_rng.shuffle(idx);
    for (std::size_t start = 0; start < idx.size(); start += cfg.pretrain.batch_size) {
      const std::size_t stop = std::min(idx.size(), start + cfg.pretrain.batch_size);
      const std::vector<std::size_t> rows(idx.begin() + static_cast<long>(start),
                                          idx.begin() + static_cast<long>(stop));
      std::vector<std::size_t> by(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) by[i] = data.labels[rows[i]];
      cross_entropy_step(m, opt, gather_rows(data.inputs, rows), by, e);
    }
    epochs_run = e + 1;

    const ValScore score = validation_score(m, val_x, val_y);
    if (score.accuracy > best.accuracy ||
        (score.accuracy == best.accuracy && score.ce_loss < best.ce_loss)) {
      best_params = m.params;
    }
    if (score.accuracy > best.accuracy) {
      best.accuracy = score.accuracy;
      best.ce_loss = score.ce_loss;
      stale = 0;
    } else {
      if (score.accuracy == best.accuracy && score.ce_loss < best.ce_loss) {
        best.ce_loss = score.ce_loss;
      }
      if (++stale >= cfg.pretrain.patience) break;
    }
  }
  m.params = std::move(best_params);

  proto::PrototypeBank bank = proto::compute_source_prototypes(m, data.inputs, data.labels);
  return PretrainResult{io::Checkpoint{std::move(m), std::move(bank)}, epochs_run,
                        best.accuracy};
}

std::vector<Prediction> infer(const model::ComposedModel& m, const num::Tensor& inputs,
                              double delta) {
  const num::Tensor feats = model::forward_features(m, inputs);
  const num::Tensor probs = model::forward_logits(m, feats).second;
  const std::size_t k = probs.cols();

  std::vector<Prediction> out;
  out.reserve(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const double* row = &probs.data[r * k];
    Prediction p;
    p.entropy = pseudo::normalized_entropy(row, k);
    const std::size_t top = pseudo::argmax_row(row, k);
    p.label = p.entropy > delta ? k : top;
    p.max_prob = row[top];
    out.push_back(p);
  }
  return out;
}

namespace {

model::StudentTeacherPair make_adapted_pair(const io::Checkpoint& source,
                                            std::uint64_t seed) {
  model::StudentTeacherPair pair = model::StudentTeacherPair::from_source(source.model);
  pair.student.reinit_projection(derive_seed(seed, "proj-init"));
  pair.teacher = pair.student;
  return pair;
}

proto::PrototypeBank make_bank(const io::Checkpoint& source, Variant variant,
                               const model::NetworkConfig& net) {
  if (variant == Variant::CometF) {
    return proto::PrototypeBank(proto::BankMode::RunningTarget, net.num_known_classes,
                                net.feature_dim);
  }
  return source.bank;
}

}  // namespace

Adapter::Adapter(const io::Checkpoint& source, Variant variant,
                 const scenario::ScenarioConfig& cfg)
    : cfg_(cfg),
      hp_(cfg.hyper),
      variant_(variant),
      pair_(make_adapted_pair(source, cfg.seed)),
      bank_(make_bank(source, variant, cfg.network_config())),
      optimizer_(pair_.student.params, cfg.hyper.learning_rate, cfg.hyper.momentum),
      augment_sigma_(cfg.stream.augment_sigma_scale * cfg.source.sigma) {
  if (variant == Variant::SourceOnly) {
    throw Error(Error::Code::InvalidArgument,
                "[adapter] source-only runs do not adapt; use infer()");
  }
  hp_.validate();
  if (!(source.model.config == cfg.network_config())) {
    throw Error(Error::Code::InvalidArgument,
                "[adapter] checkpoint architecture does not match the scenario");
  }
}

StepOutcome Adapter::step(const num::Tensor& batch_inputs, std::size_t batch_index) {
  if (batch_inputs.rank() != 2 || batch_inputs.rows() == 0) {
    throw Error(Error::Code::InvalidArgument, "[adapter] batch must be a nonempty matrix");
  }
  const std::size_t classes = pair_.student.config.num_known_classes;

  // Student forward; predictions commit here, before any update this batch.
  num::Tape tape;
  const model::StagedModel staged = model::stage(tape, pair_.student, true);
  const num::ValueId x = tape.constant(batch_inputs);
  const num::ValueId feats = model::features_node(tape, staged, x);
  const num::ValueId logits = model::logits_node(tape, staged, feats);
  const num::ValueId probs = tape.softmax(logits);
  const num::Tensor& p = tape.value(probs);

  StepOutcome out;
  out.predictions.reserve(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double* row = &p.data[r * classes];
    Prediction pred;
    pred.entropy = pseudo::normalized_entropy(row, classes);
    const std::size_t top = pseudo::argmax_row(row, classes);
    pred.label = pred.entropy > hp_.delta ? classes : top;
    pred.max_prob = row[top];
    out.predictions.push_back(pred);
  }

  // Teacher pass: pseudo-labels, and features for a running bank.
  const num::Tensor teacher_feats = model::forward_features(pair_.teacher, batch_inputs);
  const num::Tensor teacher_probs = model::forward_logits(pair_.teacher, teacher_feats).second;
  const std::vector<pseudo::PseudoLabel> labels =
      pseudo::assign(teacher_probs, pseudo::Thresholds{hp_.delta_l, hp_.delta_u});

  std::vector<std::size_t> known_rows;
  std::vector<std::size_t> known_classes;
  std::vector<std::size_t> unknown_rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i].tag) {
      case pseudo::Tag::Known:
        known_rows.push_back(i);
        known_classes.push_back(labels[i].known_class);
        break;
      case pseudo::Tag::Unknown:
        unknown_rows.push_back(i);
        break;
      case pseudo::Tag::Uncertain:
        break;
    }
  }
  out.tagged_known = known_rows.size();
  out.tagged_unknown = unknown_rows.size();
  out.tagged_uncertain = labels.size() - known_rows.size() - unknown_rows.size();

  if (bank_.mode() == proto::BankMode::RunningTarget) {
    const num::Tensor& bank_feats =
        hp_.prototype_features == FeatureSource::Teacher ? teacher_feats : tape.value(feats);
    bank_.accumulate(bank_feats, labels);
  }

  // Jitters are drawn known-rows-first, in batch order, from a seed tied to
  // this batch index alone.
  Rng aug_rng(derive_seed(cfg_.seed, "aug", batch_index));
  const num::Tensor known_x = gather_rows(batch_inputs, known_rows);
  const num::Tensor unknown_x = gather_rows(batch_inputs, unknown_rows);
  const num::Tensor known_j = jitter_rows(known_x, augment_sigma_, aug_rng);
  const num::Tensor unknown_j = jitter_rows(unknown_x, augment_sigma_, aug_rng);

  const loss::ContrastiveLayout layout = loss::build_layout(
      tape, staged, known_x, known_j, known_classes, unknown_x, unknown_j, bank_);
  const num::ValueId lc = loss::contrastive_loss(tape, layout, hp_.tau);
  const num::ValueId le = loss::entropy_loss_node(tape, probs, labels);

  num::ValueId total;
  switch (hp_.loss_combo) {
    case LossCombo::Both:
      total = tape.add(lc, tape.scale(le, hp_.lambda));
      break;
    case LossCombo::ContrastiveOnly:
      total = lc;
      break;
    case LossCombo::EntropyOnly:
      total = tape.scale(le, hp_.lambda);
      break;
  }

  out.contrastive = tape.value(lc).scalar_value();
  out.entropy = tape.value(le).scalar_value();
  out.total = tape.value(total).scalar_value();
  if (!std::isfinite(out.total)) {
    throw Error(Error::Code::Diverged,
                "[adapter] loss became non-finite at batch " + std::to_string(batch_index));
  }

  // Exactly one optimizer step and one EMA step per batch, even when every
  // gradient is zero; velocity decay is part of the update rule.
  tape.backward(total);
  num::GradientRecord grads;
  for (const auto& [name, id] : staged.ids) {
    grads.emplace(name, tape.grad(id));
  }
  optimizer_.step(pair_.student.params, grads);
  model::ema_update(pair_, hp_.alpha);

  ++steps_;
  return out;
}

RunResult run_experiment(const scenario::ScenarioConfig& cfg, Variant variant,
                         const io::Checkpoint* source) {
  cfg.validate();
  cfg.hyper.validate();

  std::optional<PretrainResult> local;
  if (source == nullptr) {
    local = pretrain_source(cfg);
    source = &local->checkpoint;
  }

  RunResult run;
  run.scenario_name = cfg.name;
  run.variant = variant;
  run.seed = cfg.seed;
  run.classes = cfg.split.source_classes();
  run.hyper = cfg.hyper;
  if (local) {
    run.pretrain_epochs = local->epochs_run;
    run.pretrain_val_accuracy = local->val_accuracy;
  }

  std::optional<Adapter> adapter;
  if (variant != Variant::SourceOnly) {
    adapter.emplace(*source, variant, cfg);
  }

  stream::TargetStream target(cfg);
  std::vector<std::size_t> pooled_pred;
  std::vector<std::size_t> pooled_truth;
  pooled_pred.reserve(target.batch_count() * target.batch_size());
  pooled_truth.reserve(target.batch_count() * target.batch_size());

  run.batches.reserve(target.batch_count());
  while (!target.exhausted()) {
    stream::TargetBatch batch = target.next();
    BatchRecord rec;
    rec.index = batch.index;
    rec.truth = batch.truth;
    if (adapter) {
      StepOutcome step = adapter->step(batch.inputs, batch.index);
      rec.predictions = std::move(step.predictions);
      rec.tagged_known = step.tagged_known;
      rec.tagged_unknown = step.tagged_unknown;
      rec.tagged_uncertain = step.tagged_uncertain;
      rec.contrastive = step.contrastive;
      rec.entropy = step.entropy;
      rec.total = step.total;
    } else {
      rec.predictions = infer(source->model, batch.inputs, cfg.hyper.delta);
    }
    for (const Prediction& pr : rec.predictions) pooled_pred.push_back(pr.label);
    pooled_truth.insert(pooled_truth.end(), rec.truth.begin(), rec.truth.end());
    run.batches.push_back(std::move(rec));
  }

  run.summary = report::summarize(pooled_pred, pooled_truth, run.classes);
  return run;
}

namespace {

json hyper_json(const HyperParams& hp) {
  json j;
  j["alpha"] = hp.alpha;
  j["delta_l"] = hp.delta_l;
  j["delta_u"] = hp.delta_u;
  j["delta"] = hp.delta;
  j["tau"] = hp.tau;
  j["lambda"] = hp.lambda;
  j["learning_rate"] = hp.learning_rate;
  j["momentum"] = hp.momentum;
  switch (hp.loss_combo) {
    case LossCombo::Both:
      j["loss_combo"] = "both";
      break;
    case LossCombo::ContrastiveOnly:
      j["loss_combo"] = "contrastive";
      break;
    case LossCombo::EntropyOnly:
      j["loss_combo"] = "entropy";
      break;
  }
  j["prototype_features"] =
      hp.prototype_features == FeatureSource::Teacher ? "teacher" : "student";
  return j;
}

}  // namespace

std::string run_record_lines(const RunResult& run) {
  std::string out;
  for (const BatchRecord& rec : run.batches) {
    json j;
    j["batch"] = rec.index;
    j["tags"] = {{"known", rec.tagged_known},
                 {"unknown", rec.tagged_unknown},
                 {"uncertain", rec.tagged_uncertain}};
    j["loss"] = {{"contrastive", rec.contrastive},
                 {"entropy", rec.entropy},
                 {"total", rec.total}};
    json preds = json::array();
    for (const Prediction& p : rec.predictions) {
      preds.push_back({{"label", p.label}, {"entropy", p.entropy}, {"max_prob", p.max_prob}});
    }
    j["predictions"] = std::move(preds);
    j["truth"] = rec.truth;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string run_summary_json(const RunResult& run) {
  json j;
  j["scenario"] = run.scenario_name;
  j["variant"] = variant_name(run.variant);
  j["seed"] = run.seed;
  j["classes"] = run.classes;
  j["batches"] = run.batches.size();
  j["pretrain"] = {{"epochs", run.pretrain_epochs},
                   {"val_accuracy", run.pretrain_val_accuracy}};
  j["hyperparams"] = hyper_json(run.hyper);

  json m;
  m["samples"] = run.summary.samples;
  m["known_total"] = run.summary.known_total;
  m["unknown_total"] = run.summary.unknown_total;
  m["accuracy"] = run.summary.accuracy;
  m["known_accuracy"] = run.summary.known_accuracy;
  m["unknown_accuracy"] = run.summary.unknown_accuracy;
  if (run.summary.h_score) {
    m["h_score"] = *run.summary.h_score;
  }
  json per_class;
  for (const auto& [cls, acc] : run.summary.per_class) {
    per_class[std::to_string(cls)] = acc;
  }
  m["per_class"] = std::move(per_class);
  j["metrics"] = std::move(m);

  std::string text = j.dump(2);
  text += '\n';
  return text;
}

std::pair<std::size_t, std::size_t> write_run_record(const RunResult& run,
                                                     const std::filesystem::path& dir,
                                                     const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const std::string record = run_record_lines(run);
  const std::string summary = run_summary_json(run);
  io::write_file_atomic(dir / (prefix + ".record.jsonl"), record);
  io::write_file_atomic(dir / (prefix + ".summary.json"), summary);
  return {record.size(), summary.size()};
}

}  // namespace comet::engine
