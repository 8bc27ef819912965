#include "comet/scenario.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "comet/checkpoint.hpp"
#include "comet/error.hpp"

namespace comet::scenario {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& msg) {
  throw Error(Error::Code::Parse, "[scenario] " + origin + ": " + msg);
}

/// Rejects keys outside `allowed` so a misspelled option cannot silently
/// turn into a default.
void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& origin, const std::string& section) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      fail(origin, "unknown key '" + item.key() + "' in " + section);
    }
  }
}

double get_number(const json& obj, const char* key, double fallback,
                  const std::string& origin) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) fail(origin, std::string(key) + " must be a number");
  return obj[key].get<double>();
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback,
                      const std::string& origin) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_unsigned()) {
    fail(origin, std::string(key) + " must be a nonnegative integer");
  }
  return obj[key].get<std::size_t>();
}

std::vector<double> get_number_list(const json& v, const char* key,
                                    const std::string& origin) {
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(v.get<double>());
    return out;
  }
  if (!v.is_array()) fail(origin, std::string(key) + " must be a number or array");
  for (const auto& e : v) {
    if (!e.is_number()) fail(origin, std::string(key) + " entries must be numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

std::string ClassSplit::regime() const {
  if (source_private > 0 && target_private > 0) return "open-partial";
  if (target_private > 0) return "open";
  if (source_private > 0) return "partial";
  return "closed";
}

void ClassSplit::validate() const {
  if (shared == 0) {
    throw Error(Error::Code::InvalidArgument, "[split] need at least one shared class");
  }
  if (source_classes() < 2) {
    throw Error(Error::Code::InvalidArgument, "[split] need at least two source classes");
  }
}

bool TransformSpec::is_identity() const {
  for (double r : rotations_deg) {
    if (r != 0.0) return false;
  }
  if (translation) {
    for (double t : *translation) {
      if (t != 0.0) return false;
    }
  } else if (translation_scale != 0.0) {
    return false;
  }
  for (double s : axis_scale) {
    if (s != 1.0) return false;
  }
  return noise_sigma == 0.0 && !match_source_noise;
}

model::NetworkConfig ScenarioConfig::network_config() const {
  model::NetworkConfig c;
  c.input_dim = input_dim;
  c.feature_dim = feature_dim;
  c.num_known_classes = split.source_classes();
  c.projection_dim = projection_dim;
  c.g_hidden = g_hidden;
  c.proj_hidden = proj_hidden;
  return c;
}

void ScenarioConfig::validate() const {
  split.validate();
  hyper.validate();
  network_config().validate();
  if (input_dim < 2) {
    throw Error(Error::Code::InvalidArgument, "[scenario] input_dim must be at least 2");
  }
  if (source.samples_per_class == 0) {
    throw Error(Error::Code::InvalidArgument, "[scenario] samples_per_class must be positive");
  }
  if (!(source.sigma > 0.0) || !(source.separation > 0.0)) {
    throw Error(Error::Code::InvalidArgument,
                "[scenario] source sigma and separation must be positive");
  }
  if (stream.num_batches == 0 || stream.batch_size == 0) {
    throw Error(Error::Code::InvalidArgument, "[scenario] stream dimensions must be positive");
  }
  if (stream.augment_sigma_scale < 0.0) {
    throw Error(Error::Code::InvalidArgument, "[scenario] augment_sigma_scale must be >= 0");
  }
  if (transform.noise_sigma < 0.0) {
    throw Error(Error::Code::InvalidArgument, "[scenario] noise_sigma must be >= 0");
  }
  if (pretrain.val_fraction <= 0.0 || pretrain.val_fraction >= 0.5) {
    throw Error(Error::Code::InvalidArgument,
                "[scenario] pretrain val_fraction must lie in (0, 0.5)");
  }
  if (transform.translation &&
      transform.translation->size() != input_dim) {
    throw Error(Error::Code::InvalidArgument,
                "[scenario] explicit translation must have input_dim entries");
  }
  if (transform.axis_scale.size() != 1 && transform.axis_scale.size() != input_dim) {
    throw Error(Error::Code::InvalidArgument,
                "[scenario] axis_scale must be a single value or input_dim entries");
  }
  if (2 * transform.rotations_deg.size() > input_dim) {
    throw Error(Error::Code::InvalidArgument,
                "[scenario] more rotation planes than the input dimension holds");
  }
}

ScenarioConfig parse_scenario(const std::string& text, const std::string& origin) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    fail(origin, "not a JSON object");
  }
  check_keys(root,
             {"name", "seed", "split", "input_dim", "source", "transform", "stream",
              "pretrain", "model", "hyperparams"},
             origin, "top level");
  if (!root.contains("split")) fail(origin, "missing required section 'split'");

  ScenarioConfig cfg;
  if (root.contains("name")) {
    if (!root["name"].is_string()) fail(origin, "name must be a string");
    cfg.name = root["name"].get<std::string>();
  }
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned()) fail(origin, "seed must be a nonnegative integer");
    cfg.seed = root["seed"].get<std::uint64_t>();
  }

  {
    const json& s = root["split"];
    if (!s.is_object()) fail(origin, "split must be an object");
    check_keys(s, {"shared", "source_private", "target_private"}, origin, "split");
    if (!s.contains("shared")) fail(origin, "split.shared is required");
    cfg.split.shared = get_count(s, "shared", 0, origin);
    cfg.split.source_private = get_count(s, "source_private", 0, origin);
    cfg.split.target_private = get_count(s, "target_private", 0, origin);
  }

  cfg.input_dim = get_count(root, "input_dim", cfg.input_dim, origin);

  if (root.contains("source")) {
    const json& s = root["source"];
    if (!s.is_object()) fail(origin, "source must be an object");
    check_keys(s, {"samples_per_class", "separation", "sigma"}, origin, "source");
    cfg.source.samples_per_class =
        get_count(s, "samples_per_class", cfg.source.samples_per_class, origin);
    cfg.source.separation = get_number(s, "separation", cfg.source.separation, origin);
    cfg.source.sigma = get_number(s, "sigma", cfg.source.sigma, origin);
  }

  if (root.contains("transform")) {
    const json& t = root["transform"];
    if (!t.is_object()) fail(origin, "transform must be an object");
    check_keys(t, {"rotation_deg", "translation", "translation_scale", "axis_scale",
                   "noise_sigma"},
               origin, "transform");
    if (t.contains("rotation_deg")) {
      cfg.transform.rotations_deg = get_number_list(t["rotation_deg"], "rotation_deg", origin);
    }
    if (t.contains("translation")) {
      cfg.transform.translation = get_number_list(t["translation"], "translation", origin);
    }
    cfg.transform.translation_scale =
        get_number(t, "translation_scale", cfg.transform.translation_scale, origin);
    if (t.contains("axis_scale")) {
      cfg.transform.axis_scale = get_number_list(t["axis_scale"], "axis_scale", origin);
    }
    if (t.contains("noise_sigma")) {
      if (t["noise_sigma"].is_string()) {
        if (t["noise_sigma"].get<std::string>() != "source") {
          fail(origin, "noise_sigma must be a number or the string \"source\"");
        }
        cfg.transform.match_source_noise = true;
      } else if (t["noise_sigma"].is_number()) {
        cfg.transform.noise_sigma = t["noise_sigma"].get<double>();
      } else {
        fail(origin, "noise_sigma must be a number or the string \"source\"");
      }
    }
  }

  if (root.contains("stream")) {
    const json& s = root["stream"];
    if (!s.is_object()) fail(origin, "stream must be an object");
    check_keys(s, {"num_batches", "batch_size", "augment_sigma_scale"}, origin, "stream");
    cfg.stream.num_batches = get_count(s, "num_batches", cfg.stream.num_batches, origin);
    cfg.stream.batch_size = get_count(s, "batch_size", cfg.stream.batch_size, origin);
    cfg.stream.augment_sigma_scale =
        get_number(s, "augment_sigma_scale", cfg.stream.augment_sigma_scale, origin);
  }

  if (root.contains("pretrain")) {
    const json& p = root["pretrain"];
    if (!p.is_object()) fail(origin, "pretrain must be an object");
    check_keys(p, {"max_epochs", "batch_size", "learning_rate", "val_fraction", "patience"},
               origin, "pretrain");
    cfg.pretrain.max_epochs = get_count(p, "max_epochs", cfg.pretrain.max_epochs, origin);
    cfg.pretrain.batch_size = get_count(p, "batch_size", cfg.pretrain.batch_size, origin);
    cfg.pretrain.learning_rate =
        get_number(p, "learning_rate", cfg.pretrain.learning_rate, origin);
    cfg.pretrain.val_fraction =
        get_number(p, "val_fraction", cfg.pretrain.val_fraction, origin);
    cfg.pretrain.patience = get_count(p, "patience", cfg.pretrain.patience, origin);
  }

  if (root.contains("model")) {
    const json& m = root["model"];
    if (!m.is_object()) fail(origin, "model must be an object");
    check_keys(m, {"feature_dim", "projection_dim", "g_hidden", "proj_hidden"}, origin,
               "model");
    cfg.feature_dim = get_count(m, "feature_dim", cfg.feature_dim, origin);
    cfg.projection_dim = get_count(m, "projection_dim", cfg.projection_dim, origin);
    cfg.proj_hidden = get_count(m, "proj_hidden", cfg.proj_hidden, origin);
    if (m.contains("g_hidden")) {
      if (!m["g_hidden"].is_array()) fail(origin, "g_hidden must be an array");
      cfg.g_hidden.clear();
      for (const auto& e : m["g_hidden"]) {
        if (!e.is_number_unsigned()) fail(origin, "g_hidden entries must be positive integers");
        cfg.g_hidden.push_back(e.get<std::size_t>());
      }
    }
  }

  if (root.contains("hyperparams")) {
    const json& h = root["hyperparams"];
    if (!h.is_object()) fail(origin, "hyperparams must be an object");
    check_keys(h,
               {"alpha", "delta_l", "delta_u", "delta", "tau", "lambda", "learning_rate",
                "momentum", "loss_combo"},
               origin, "hyperparams");
    cfg.hyper.alpha = get_number(h, "alpha", cfg.hyper.alpha, origin);
    cfg.hyper.delta_l = get_number(h, "delta_l", cfg.hyper.delta_l, origin);
    cfg.hyper.delta_u = get_number(h, "delta_u", cfg.hyper.delta_u, origin);
    cfg.hyper.delta = get_number(h, "delta", cfg.hyper.delta, origin);
    cfg.hyper.tau = get_number(h, "tau", cfg.hyper.tau, origin);
    cfg.hyper.lambda = get_number(h, "lambda", cfg.hyper.lambda, origin);
    cfg.hyper.learning_rate = get_number(h, "learning_rate", cfg.hyper.learning_rate, origin);
    cfg.hyper.momentum = get_number(h, "momentum", cfg.hyper.momentum, origin);
    if (h.contains("loss_combo")) {
      if (!h["loss_combo"].is_string()) fail(origin, "hyperparams.loss_combo must be a string");
      const std::string combo = h["loss_combo"].get<std::string>();
      if (combo == "both") {
        cfg.hyper.loss_combo = engine::LossCombo::Both;
      } else if (combo == "contrastive") {
        cfg.hyper.loss_combo = engine::LossCombo::ContrastiveOnly;
      } else if (combo == "entropy") {
        cfg.hyper.loss_combo = engine::LossCombo::EntropyOnly;
      } else {
        fail(origin, "hyperparams.loss_combo must be both, contrastive or entropy, got '" +
                         combo + "'");
      }
    }
  }

  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(origin, e.what());
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  return parse_scenario(io::read_file(path), path.string());
}

}  // namespace comet::scenario
