#include "comet/report.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "comet/checkpoint.hpp"
#include "comet/engine.hpp"
#include "comet/error.hpp"

namespace comet::report {

double accuracy(const std::vector<std::size_t>& pred,
                const std::vector<std::size_t>& truth) {
  if (pred.size() != truth.size()) {
    throw Error(Error::Code::ShapeMismatch,
                "[accuracy] prediction and truth lengths differ: " +
                    std::to_string(pred.size()) + " vs " + std::to_string(truth.size()));
  }
  if (pred.empty()) {
    throw Error(Error::Code::InvalidArgument, "[accuracy] empty inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double h_score(double known_accuracy, double unknown_accuracy) {
  const bool in_range = known_accuracy >= 0.0 && known_accuracy <= 1.0 &&
                        unknown_accuracy >= 0.0 && unknown_accuracy <= 1.0;
  if (!in_range) {
    throw Error(Error::Code::InvalidArgument,
                "[h_score] accuracies must lie in [0, 1]");
  }
  const double s = known_accuracy + unknown_accuracy;
  if (s == 0.0) return 0.0;
  return 2.0 * known_accuracy * unknown_accuracy / s;
}

MetricSummary summarize(const std::vector<std::size_t>& pred,
                        const std::vector<std::size_t>& truth, std::size_t classes) {
  MetricSummary s;
  s.accuracy = accuracy(pred, truth);  // validates sizes and non-emptiness
  s.samples = pred.size();

  std::map<std::size_t, std::size_t> count;
  std::map<std::size_t, std::size_t> hit;
  std::size_t known_hits = 0;
  std::size_t unknown_hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] > classes) {
      throw Error(Error::Code::InvalidArgument,
                  "[summarize] truth label " + std::to_string(truth[i]) +
                      " exceeds the unknown bucket " + std::to_string(classes));
    }
    ++count[truth[i]];
    const bool correct = pred[i] == truth[i];
    if (correct) ++hit[truth[i]];
    if (truth[i] == classes) {
      ++s.unknown_total;
      if (correct) ++unknown_hits;
    } else {
      ++s.known_total;
      if (correct) ++known_hits;
    }
  }
  if (s.known_total > 0) {
    s.known_accuracy = static_cast<double>(known_hits) / static_cast<double>(s.known_total);
  }
  if (s.unknown_total > 0) {
    s.unknown_accuracy =
        static_cast<double>(unknown_hits) / static_cast<double>(s.unknown_total);
  }
  if (s.known_total > 0 && s.unknown_total > 0) {
    s.h_score = h_score(s.known_accuracy, s.unknown_accuracy);
  }
  for (const auto& [cls, n] : count) {
    s.per_class[cls] = static_cast<double>(hit[cls]) / static_cast<double>(n);
  }
  return s;
}

double headline_metric(const MetricSummary& s) {
  return s.h_score ? *s.h_score : s.accuracy;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "batch_size") return SweepAxis::BatchSize;
  if (name == "alpha") return SweepAxis::Alpha;
  if (name == "delta") return SweepAxis::Delta;
  if (name == "threshold_pair") return SweepAxis::ThresholdPair;
  if (name == "loss_combo") return SweepAxis::LossCombo;
  throw Error(Error::Code::InvalidArgument,
              "[sweep] unknown axis '" + name +
                  "'; expected batch_size, alpha, delta, threshold_pair or loss_combo");
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::BatchSize:
      return "batch_size";
    case SweepAxis::Alpha:
      return "alpha";
    case SweepAxis::Delta:
      return "delta";
    case SweepAxis::ThresholdPair:
      return "threshold_pair";
    case SweepAxis::LossCombo:
      return "loss_combo";
  }
  throw Error(Error::Code::InvalidArgument, "[sweep] unknown axis enum value");
}

namespace {

double parse_value_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw Error(Error::Code::Parse, "[sweep] cannot parse " + what + " from '" + text + "'");
  }
  return v;
}

std::size_t parse_value_size(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end || v == 0) {
    throw Error(Error::Code::Parse,
                "[sweep] cannot parse positive " + what + " from '" + text + "'");
  }
  return v;
}

}  // namespace

scenario::ScenarioConfig apply_axis(const scenario::ScenarioConfig& base,
                                    SweepAxis axis, const std::string& value) {
  scenario::ScenarioConfig cfg = base;
  switch (axis) {
    case SweepAxis::BatchSize: {
      const std::size_t b = parse_value_size(value, "batch size");
      // Hold the total sample budget fixed so smaller batches mean more,
      // not less, stream.
      const double total = static_cast<double>(base.stream.num_batches) *
                           static_cast<double>(base.stream.batch_size);
      cfg.stream.batch_size = b;
      cfg.stream.num_batches = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(total / static_cast<double>(b))));
      break;
    }
    case SweepAxis::Alpha:
      cfg.hyper.alpha = parse_value_double(value, "alpha");
      break;
    case SweepAxis::Delta:
      cfg.hyper.delta = parse_value_double(value, "delta");
      break;
    case SweepAxis::ThresholdPair: {
      const std::size_t slash = value.find('/');
      if (slash == std::string::npos) {
        throw Error(Error::Code::Parse,
                    "[sweep] threshold pair must look like 'lower/upper', got '" + value + "'");
      }
      cfg.hyper.delta_l = parse_value_double(value.substr(0, slash), "lower threshold");
      cfg.hyper.delta_u = parse_value_double(value.substr(slash + 1), "upper threshold");
      break;
    }
    case SweepAxis::LossCombo: {
      if (value == "both") {
        cfg.hyper.loss_combo = engine::LossCombo::Both;
      } else if (value == "contrastive") {
        cfg.hyper.loss_combo = engine::LossCombo::ContrastiveOnly;
      } else if (value == "entropy") {
        cfg.hyper.loss_combo = engine::LossCombo::EntropyOnly;
      } else {
        throw Error(Error::Code::Parse,
                    "[sweep] loss combo must be both, contrastive or entropy, got '" +
                        value + "'");
      }
      break;
    }
  }
  cfg.hyper.validate();
  return cfg;
}

SweepResult run_sweep(const scenario::ScenarioConfig& base, SweepAxis axis,
                      const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds,
                      const std::vector<engine::Variant>& variants, std::size_t jobs) {
  base.validate();
  if (values.empty() || seeds.empty() || variants.empty()) {
    throw Error(Error::Code::InvalidArgument,
                "[sweep] values, seeds and variants must all be nonempty");
  }
  for (const std::string& v : values) {
    apply_axis(base, axis, v);  // fail fast on malformed grid values
  }

  // One pretraining per seed, shared across the whole grid. None of the
  // sweep axes touch the source side.
  std::vector<io::Checkpoint> checkpoints;
  checkpoints.reserve(seeds.size());
  for (const std::uint64_t seed : seeds) {
    scenario::ScenarioConfig cfg = base;
    cfg.seed = seed;
    checkpoints.push_back(std::move(engine::pretrain_source(cfg).checkpoint));
  }

  struct Task {
    std::size_t variant;
    std::size_t value;
    std::size_t seed;
  };
  std::vector<Task> tasks;
  tasks.reserve(variants.size() * values.size() * seeds.size());
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    for (std::size_t gi = 0; gi < values.size(); ++gi) {
      for (std::size_t si = 0; si < seeds.size(); ++si) {
        tasks.push_back({vi, gi, si});
      }
    }
  }

  std::vector<double> metrics(tasks.size(), 0.0);
  auto run_task = [&](std::size_t i) {
    const Task& t = tasks[i];
    scenario::ScenarioConfig cfg = apply_axis(base, axis, values[t.value]);
    cfg.seed = seeds[t.seed];
    const engine::RunResult run =
        engine::run_experiment(cfg, variants[t.variant], &checkpoints[t.seed]);
    metrics[i] = headline_metric(run.summary);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        try {
          run_task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  SweepResult result;
  result.axis = axis;
  result.metric_name =
      base.split.target_private > 0 && base.split.shared > 0 ? "h_score" : "accuracy";
  result.cells.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    result.cells.push_back(SweepCell{engine::variant_name(variants[t.variant]),
                                     values[t.value], seeds[t.seed], metrics[i]});
  }
  return result;
}

std::string sweep_table_csv(const SweepResult& sweep) {
  std::string out = "variant," + axis_name(sweep.axis) + ",seed," + sweep.metric_name + "\n";
  for (const SweepCell& c : sweep.cells) {
    out += c.variant;
    out += ',';
    out += c.value;
    out += ',';
    out += std::to_string(c.seed);
    out += ',';
    out += format_double(c.metric);
    out += '\n';
  }
  return out;
}

std::string sweep_means_csv(const SweepResult& sweep) {
  // Preserve first-appearance order of (variant, value) groups.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const SweepCell& c : sweep.cells) {
    const auto key = std::make_pair(c.variant, c.value);
    if (groups.find(key) == groups.end()) keys.push_back(key);
    groups[key].push_back(c.metric);
  }
  std::string out =
      "variant," + axis_name(sweep.axis) + ",seeds,mean_" + sweep.metric_name + "\n";
  for (const auto& key : keys) {
    const std::vector<double>& ms = groups[key];
    double mean = 0.0;
    for (const double m : ms) mean += m;
    mean /= static_cast<double>(ms.size());
    out += key.first;
    out += ',';
    out += key.second;
    out += ',';
    out += std::to_string(ms.size());
    out += ',';
    out += format_double(mean);
    out += '\n';
  }
  return out;
}

void write_sweep(const SweepResult& sweep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_file_atomic(dir / "table.csv", sweep_table_csv(sweep));
  io::write_file_atomic(dir / "means.csv", sweep_means_csv(sweep));
}

}  // namespace comet::report
