#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace fs = std::filesystem;
using condfilter::cli::CommonOptions;

int main(int argc, char** argv) {
  CLI::App app{"Conformal filtering of synthetic data-augmentation candidates"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::string> alpha, rho, lambda, gamma, bandwidth, seed;
  bool deterministic = false;
  unsigned workers = 0;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--alpha", alpha, "miscoverage level");
  app.add_option("--rho", rho, "tolerated false inclusions per sample");
  app.add_option("--lambda", lambda, "gold quality threshold");
  app.add_option("--gamma", gamma, "RKHS regularization");
  app.add_option("--bandwidth", bandwidth, "RBF bandwidth or 'auto'");
  app.add_option("--seed", seed, "randomization seed");
  app.add_option("--workers", workers, "worker threads (0 = all cores)");
  app.add_flag("--deterministic", deterministic, "use the deterministic acceptance event");

  std::string cal_path, artifact_path, aug_path, out_path, scenario_path, decisions_path,
      gold_path, strategy;
  std::vector<std::string> strategies;

  auto* calibrate = app.add_subcommand("calibrate", "score a gold-labelled calibration set");
  calibrate->add_option("--cal", cal_path, "calibration records (JSONL or CSV)")->required();
  calibrate->add_option("--out", out_path, "calibration artifact (JSON)")->required();

  auto* filter = app.add_subcommand("filter", "filter augmentation records");
  filter->add_option("--artifact", artifact_path, "calibration artifact")->required();
  filter->add_option("--aug", aug_path, "augmentation records (JSONL or CSV)")->required();
  filter->add_option("--strategy", strategy, "filtering strategy")->default_val("conditional_cp");
  filter->add_option("--out", out_path, "decisions (JSONL)")->required();

  auto* simulate = app.add_subcommand("simulate", "coverage study on synthetic scenarios");
  simulate->add_option("--scenario", scenario_path, "scenario key = value file")->required();
  simulate->add_option("--strategy", strategies, "strategies, comma separated")
      ->delimiter(',')
      ->required();
  simulate->add_option("--out", out_path, "report (JSON)")->required();

  std::string metrics_out;
  auto* metrics = app.add_subcommand("metrics", "score decisions against gold");
  metrics->add_option("--decisions", decisions_path, "decisions (JSONL)")->required();
  metrics->add_option("--gold", gold_path, "records with gold scores")->required();
  metrics->add_option("--out", metrics_out, "metrics (JSON); stdout when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  CommonOptions options;
  if (!config_path.empty()) options.config_path = config_path;
  options.workers = workers;
  auto flag = [&](const char* key, const std::optional<std::string>& v) {
    if (v) options.flag_overrides.emplace_back(key, *v);
  };
  flag("alpha", alpha);
  flag("rho", rho);
  flag("lambda", lambda);
  flag("gamma", gamma);
  flag("bandwidth", bandwidth);
  flag("rng_seed", seed);
  if (deterministic) options.flag_overrides.emplace_back("randomization", "deterministic");

  try {
    if (*calibrate) {
      condfilter::cli::cmd_calibrate(cal_path, options, out_path);
    } else if (*filter) {
      condfilter::cli::cmd_filter(artifact_path, aug_path, strategy, options, out_path);
    } else if (*simulate) {
      condfilter::cli::cmd_simulate(scenario_path, strategies, options, out_path);
    } else if (*metrics) {
      std::optional<fs::path> out;
      if (!metrics_out.empty()) out = metrics_out;
      const std::string text = condfilter::cli::cmd_metrics(decisions_path, gold_path, options, out);
      if (!out) std::cout << text;
    }
  } catch (const std::exception& e) {
    std::cerr << "condfilter: " << e.what() << "\n";
    return condfilter::cli::exit_code_for(e);
  }
  return 0;
}
