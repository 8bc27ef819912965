#include "comet/network.hpp"

#include <cmath>

#include "comet/error.hpp"
#include "comet/rng.hpp"

namespace comet::model {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Error::Code::InvalidArgument, "[network] " + what);
}

num::Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  num::Tensor w = num::Tensor::zeros({fan_in, fan_out});
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

/// Layer sizes of g including input and output: input, hidden..., feature.
std::vector<std::size_t> g_layer_dims(const NetworkConfig& c) {
  std::vector<std::size_t> dims;
  dims.push_back(c.input_dim);
  for (std::size_t h : c.g_hidden) dims.push_back(h);
  dims.push_back(c.feature_dim);
  return dims;
}

void init_projection_params(num::ParameterSet& params, const NetworkConfig& c, Rng& rng) {
  params["proj.w0"] = init_weight(c.feature_dim, c.proj_hidden, rng);
  params["proj.b0"] = num::Tensor::zeros({c.proj_hidden});
  params["proj.w1"] = init_weight(c.proj_hidden, c.projection_dim, rng);
  params["proj.b1"] = num::Tensor::zeros({c.projection_dim});
}

}  // namespace

void NetworkConfig::validate() const {
  require(input_dim >= 1, "input_dim must be at least 1");
  require(feature_dim >= 1, "feature_dim must be at least 1");
  require(num_known_classes >= 2, "need at least 2 known classes");
  require(projection_dim >= 1, "projection_dim must be at least 1");
  require(proj_hidden >= 1, "proj_hidden must be at least 1");
  for (std::size_t h : g_hidden) require(h >= 1, "g_hidden entries must be at least 1");
}

ComposedModel ComposedModel::init(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  ComposedModel m;
  m.config = config;

  // Fill order is fixed: g layers in depth order, then h, then proj. Each
  // tensor is drawn from its own derived stream so a width change in one
  // block cannot shift the draws of another.
  Rng g_rng(derive_seed(seed, "init.g"));
  const std::vector<std::size_t> dims = g_layer_dims(config);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::string suffix = std::to_string(l);
    m.params["g.w" + suffix] = init_weight(dims[l], dims[l + 1], g_rng);
    m.params["g.b" + suffix] = num::Tensor::zeros({dims[l + 1]});
  }

  Rng h_rng(derive_seed(seed, "init.h"));
  m.params["h.w"] = init_weight(config.feature_dim, config.num_known_classes, h_rng);
  m.params["h.b"] = num::Tensor::zeros({config.num_known_classes});

  Rng p_rng(derive_seed(seed, "init.proj"));
  init_projection_params(m.params, config, p_rng);
  return m;
}

void ComposedModel::reinit_projection(std::uint64_t seed) {
  Rng p_rng(derive_seed(seed, "init.proj"));
  init_projection_params(params, config, p_rng);
}

StagedModel stage(num::Tape& tape, const ComposedModel& model, bool trainable) {
  StagedModel staged;
  staged.config = &model.config;
  for (const auto& [name, value] : model.params) {
    staged.ids[name] = trainable ? tape.parameter(value) : tape.constant(value);
  }
  return staged;
}

namespace {

num::ValueId staged_id(const StagedModel& m, const std::string& name) {
  const auto it = m.ids.find(name);
  if (it == m.ids.end()) {
    throw Error(Error::Code::InvalidState, "[network] missing staged parameter " + name);
  }
  return it->second;
}

num::ValueId linear(num::Tape& tape, const StagedModel& m, num::ValueId x,
                    const std::string& w, const std::string& b) {
  return tape.add_rowvec(tape.matmul(x, staged_id(m, w)), staged_id(m, b));
}

}  // namespace

num::ValueId features_node(num::Tape& tape, const StagedModel& m, num::ValueId x) {
  num::ValueId h = x;
  const std::size_t layers = m.config->g_hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string suffix = std::to_string(l);
    h = tape.relu(linear(tape, m, h, "g.w" + suffix, "g.b" + suffix));
  }
  return h;
}

num::ValueId logits_node(num::Tape& tape, const StagedModel& m, num::ValueId feats) {
  return linear(tape, m, feats, "h.w", "h.b");
}

num::ValueId projection_node(num::Tape& tape, const StagedModel& m, num::ValueId feats) {
  num::ValueId hidden = tape.relu(linear(tape, m, feats, "proj.w0", "proj.b0"));
  return linear(tape, m, hidden, "proj.w1", "proj.b1");
}

num::Tensor forward_features(const ComposedModel& model, const num::Tensor& batch) {
  num::Tape tape;
  StagedModel m = stage(tape, model, false);
  return tape.value(features_node(tape, m, tape.constant(batch)));
}

std::pair<num::Tensor, num::Tensor> forward_logits(const ComposedModel& model,
                                                   const num::Tensor& features) {
  num::Tape tape;
  StagedModel m = stage(tape, model, false);
  num::ValueId logits = logits_node(tape, m, tape.constant(features));
  num::ValueId probs = tape.softmax(logits);
  return {tape.value(logits), tape.value(probs)};
}

num::Tensor forward_projection(const ComposedModel& model, const num::Tensor& features) {
  num::Tape tape;
  StagedModel m = stage(tape, model, false);
  return tape.value(projection_node(tape, m, tape.constant(features)));
}

StudentTeacherPair StudentTeacherPair::from_source(const ComposedModel& source) {
  return StudentTeacherPair{source, source};
}

void ema_update(StudentTeacherPair& pair, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw Error(Error::Code::InvalidArgument, "[ema] alpha must lie in [0,1]");
  }
  if (!num::structurally_equal(pair.student.params, pair.teacher.params)) {
    throw Error(Error::Code::ShapeMismatch,
                "[ema] student and teacher parameter sets diverged structurally");
  }
  auto ti = pair.teacher.params.begin();
  for (auto si = pair.student.params.begin(); si != pair.student.params.end(); ++si, ++ti) {
    for (std::size_t k = 0; k < si->second.data.size(); ++k) {
      ti->second.data[k] = alpha * ti->second.data[k] + (1.0 - alpha) * si->second.data[k];
    }
  }
}

}  // namespace comet::model
