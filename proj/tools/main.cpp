// Command-line front end: source pretraining, single runs, baselines,
// hyperparameter sweeps and the built-in self check.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "comet/checkpoint.hpp"
#include "comet/engine.hpp"
#include "comet/error.hpp"
#include "comet/report.hpp"
#include "comet/scenario.hpp"
#include "comet/selftest.hpp"

namespace {

using comet::engine::Variant;

struct HyperFlags {
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<double> lambda;
  std::optional<double> delta;
  std::optional<double> delta_l;
  std::optional<double> delta_u;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;

  void attach(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "Teacher EMA coefficient");
    cmd->add_option("--tau", tau, "Contrastive temperature");
    cmd->add_option("--lambda", lambda, "Entropy loss weight");
    cmd->add_option("--delta", delta, "Inference rejection threshold");
    cmd->add_option("--delta-l", delta_l, "Pseudo-label lower entropy threshold");
    cmd->add_option("--delta-u", delta_u, "Pseudo-label upper entropy threshold");
    cmd->add_option("--lr", learning_rate, "Adaptation learning rate");
    cmd->add_option("--batch-size", batch_size, "Stream batch size");
  }

  void apply(comet::scenario::ScenarioConfig& cfg) const {
    if (alpha) cfg.hyper.alpha = *alpha;
    if (tau) cfg.hyper.tau = *tau;
    if (lambda) cfg.hyper.lambda = *lambda;
    if (delta) cfg.hyper.delta = *delta;
    if (delta_l) cfg.hyper.delta_l = *delta_l;
    if (delta_u) cfg.hyper.delta_u = *delta_u;
    if (learning_rate) cfg.hyper.learning_rate = *learning_rate;
    if (batch_size) cfg.stream.batch_size = *batch_size;
    cfg.validate();
    cfg.hyper.validate();
  }
};

comet::scenario::ScenarioConfig load_or_default(const std::string& path) {
  if (path.empty()) {
    comet::scenario::ScenarioConfig cfg;
    cfg.name = "default";
    cfg.validate();
    return cfg;
  }
  return comet::scenario::load_scenario(path);
}

std::string describe(const comet::report::MetricSummary& s) {
  std::string line = "accuracy=" + comet::report::format_double(s.accuracy);
  line += " known=" + comet::report::format_double(s.known_accuracy);
  line += " unknown=" + comet::report::format_double(s.unknown_accuracy);
  if (s.h_score) {
    line += " h_score=" + comet::report::format_double(*s.h_score);
  }
  return line;
}

int run_variant(const std::string& scenario_path, const HyperFlags& hyper,
                const std::string& variant_name, std::vector<std::uint64_t> seeds,
                const std::string& checkpoint_path, const std::string& out_dir) {
  comet::scenario::ScenarioConfig cfg = load_or_default(scenario_path);
  hyper.apply(cfg);
  const Variant variant = comet::engine::parse_variant(variant_name);
  if (seeds.empty()) seeds.push_back(cfg.seed);

  std::optional<comet::io::Checkpoint> checkpoint;
  if (!checkpoint_path.empty()) {
    checkpoint.emplace(comet::io::Checkpoint::load(checkpoint_path));
  }

  double mean = 0.0;
  for (const std::uint64_t seed : seeds) {
    cfg.seed = seed;
    const comet::engine::RunResult run = comet::engine::run_experiment(
        cfg, variant, checkpoint ? &*checkpoint : nullptr);
    const std::string prefix =
        cfg.name + "." + comet::engine::variant_name(variant) + ".seed" + std::to_string(seed);
    comet::engine::write_run_record(run, out_dir, prefix);
    mean += comet::report::headline_metric(run.summary);
    std::cout << comet::engine::variant_name(variant) << " seed=" << seed << " "
              << describe(run.summary) << "  -> " << out_dir << "/" << prefix << ".*"
              << "\n";
  }
  if (seeds.size() > 1) {
    mean /= static_cast<double>(seeds.size());
    std::cout << comet::engine::variant_name(variant)
              << " mean=" << comet::report::format_double(mean) << " over " << seeds.size()
              << " seeds\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online source-free adaptation simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "runs";
  std::string checkpoint_path;
  std::string variant_name = "comet-p";
  std::vector<std::uint64_t> seeds;
  HyperFlags hyper;

  CLI::App* pretrain = app.add_subcommand("pretrain", "Train the source model and save a checkpoint");
  std::string pretrain_out = "runs/checkpoint.bin";
  std::optional<std::uint64_t> pretrain_seed;
  pretrain->add_option("--scenario", scenario_path, "Scenario file (defaults apply without it)");
  pretrain->add_option("--seed", pretrain_seed, "Override the scenario seed");
  pretrain->add_option("--out", pretrain_out, "Checkpoint file to write");

  CLI::App* run = app.add_subcommand("run", "Adapt over the target stream and record results");
  run->add_option("--scenario", scenario_path, "Scenario file (defaults apply without it)");
  run->add_option("--variant", variant_name, "source-only, comet-p or comet-f");
  run->add_option("--seeds", seeds, "Seeds to run, comma separated")->delimiter(',');
  run->add_option("--seed", seeds, "Single seed shorthand");
  run->add_option("--checkpoint", checkpoint_path, "Reuse a saved source checkpoint");
  run->add_option("--out", out_dir, "Output directory");
  hyper.attach(run);

  CLI::App* baseline = app.add_subcommand("baseline", "Frozen source model over the same stream");
  baseline->add_option("--scenario", scenario_path, "Scenario file (defaults apply without it)");
  baseline->add_option("--seeds", seeds, "Seeds to run, comma separated")->delimiter(',');
  baseline->add_option("--seed", seeds, "Single seed shorthand");
  baseline->add_option("--checkpoint", checkpoint_path, "Reuse a saved source checkpoint");
  baseline->add_option("--out", out_dir, "Output directory");
  hyper.attach(baseline);

  CLI::App* sweep = app.add_subcommand("sweep", "Vary one axis over a seed grid");
  std::string axis_name = "batch_size";
  std::vector<std::string> values;
  std::vector<std::string> variant_names = {"comet-p", "source-only"};
  std::size_t jobs = 1;
  sweep->add_option("--scenario", scenario_path, "Scenario file (defaults apply without it)");
  sweep->add_option("--axis", axis_name,
                    "batch_size, alpha, delta, threshold_pair or loss_combo");
  sweep->add_option("--values", values, "Axis values, comma separated")
      ->delimiter(',')
      ->required();
  sweep->add_option("--seeds", seeds, "Seeds, comma separated")->delimiter(',');
  sweep->add_option("--variants", variant_names, "Variants to include, comma separated")
      ->delimiter(',');
  sweep->add_option("--jobs", jobs, "Worker threads");
  sweep->add_option("--out", out_dir, "Output directory");
  hyper.attach(sweep);

  CLI::App* selftest = app.add_subcommand("selftest", "Run the built-in verification checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(pretrain)) {
      comet::scenario::ScenarioConfig cfg = load_or_default(scenario_path);
      if (pretrain_seed) cfg.seed = *pretrain_seed;
      const comet::engine::PretrainResult result = comet::engine::pretrain_source(cfg);
      const std::filesystem::path out(pretrain_out);
      if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
      result.checkpoint.save(out);
      std::cout << "pretrained " << cfg.name << " seed=" << cfg.seed
                << " epochs=" << result.epochs_run
                << " val_accuracy=" << comet::report::format_double(result.val_accuracy)
                << " -> " << pretrain_out << "\n";
      return 0;
    }
    if (app.got_subcommand(run)) {
      return run_variant(scenario_path, hyper, variant_name, seeds, checkpoint_path, out_dir);
    }
    if (app.got_subcommand(baseline)) {
      return run_variant(scenario_path, hyper, "source-only", seeds, checkpoint_path, out_dir);
    }
    if (app.got_subcommand(sweep)) {
      comet::scenario::ScenarioConfig cfg = load_or_default(scenario_path);
      hyper.apply(cfg);
      if (seeds.empty()) seeds.push_back(cfg.seed);
      std::vector<Variant> variants;
      for (const std::string& name : variant_names) {
        variants.push_back(comet::engine::parse_variant(name));
      }
      const comet::report::SweepResult result = comet::report::run_sweep(
          cfg, comet::report::parse_axis(axis_name), values, seeds, variants, jobs);
      comet::report::write_sweep(result, out_dir);
      std::cout << comet::report::sweep_means_csv(result) << "table: " << out_dir
                << "/table.csv\n";
      return 0;
    }
    if (app.got_subcommand(selftest)) {
      const std::vector<comet::selftest::CheckResult> results = comet::selftest::run_all();
      for (const comet::selftest::CheckResult& r : results) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
      }
      return comet::selftest::all_passed(results) ? 0 : 1;
    }
  } catch (const comet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
