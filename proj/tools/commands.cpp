#include "commands.hpp"

#include <map>
#include <sstream>
#include <unordered_map>

#include "condfilter/evalsim.hpp"
#include "condfilter/kqr.hpp"
#include "condfilter/pipeline.hpp"

namespace condfilter::cli {

using nlohmann::json;
namespace fs = std::filesystem;

FilterConfig resolve_config(const CommonOptions& options, FilterConfig base) {
  if (options.config_path) {
    const std::string source = options.config_path->string();
    std::size_t lineno = 0;
    // Keep line numbers by parsing one line at a time.
    std::istringstream in(read_file(*options.config_path));
    std::string line;
    while (std::getline(in, line)) {
      ++lineno;
      for (const auto& [key, value] : parse_key_values(line, source)) {
        apply_config_value(base, key, value, source + ":" + std::to_string(lineno) + ": ");
      }
    }
  }
  apply_env_overrides(base);
  for (const auto& [key, value] : options.flag_overrides) {
    apply_config_value(base, key, value, "--" + key + ": ");
  }
  base.validate();
  return base;
}

namespace {

ManifestEntry entry_for(const fs::path& path, const std::string& bytes) {
  return {path.string(), sha256_hex(bytes)};
}

/// Writes `content` to `out` and its manifest next to it.
void publish(const fs::path& out, const std::string& content, RunManifest manifest) {
  manifest.outputs.push_back(entry_for(out, content));
  write_file_atomic(out, content);
  write_file_atomic(manifest_path(out), dump_json(manifest_to_json(manifest), 2) + "\n");
}

}  // namespace

void cmd_calibrate(const fs::path& cal_path, const CommonOptions& options, const fs::path& out_path) {
  const FilterConfig config = resolve_config(options);
  const std::string bytes = read_file(cal_path);
  const Dataset cal = cal_path.extension() == ".csv"
                          ? parse_csv_dataset(bytes, cal_path.string())
                          : parse_jsonl_dataset(bytes, cal_path.string());
  const Calibration calibration = calibrate(cal, config);
  const std::string artifact = dump_json(calibration_to_json(calibration, config), 2) + "\n";

  RunManifest m;
  m.command = "calibrate";
  m.config = config;
  m.inputs.push_back(entry_for(cal_path, bytes));
  if (options.config_path) m.inputs.push_back(entry_for(*options.config_path, read_file(*options.config_path)));
  publish(out_path, artifact, std::move(m));
}

void cmd_filter(const fs::path& artifact_path, const fs::path& aug_path,
                const std::string& strategy_text, const CommonOptions& options,
                const fs::path& out_path) {
  Strategy strategy;
  try {
    strategy = Strategy::parse(strategy_text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::string artifact_bytes = read_file(artifact_path);
  json artifact_json;
  try {
    artifact_json = json::parse(artifact_bytes);
  } catch (const json::parse_error& e) {
    throw ConfigError(artifact_path.string() + ": invalid JSON: " + e.what());
  }
  const CalibrationArtifact artifact = calibration_from_json(artifact_json);
  FilterConfig config = resolve_config(options, artifact.config);
  if (config.lambda != artifact.config.lambda || config.rho != artifact.config.rho) {
    throw ConfigError("lambda and rho must match the calibration artifact (scores depend on them)");
  }
  Calibration calibration = artifact.calibration;
  if (config.bandwidth && *config.bandwidth != calibration.kernel.bandwidth) {
    calibration.kernel = KernelSpec(*config.bandwidth);
  }

  const std::string aug_bytes = read_file(aug_path);
  const Dataset aug = aug_path.extension() == ".csv"
                          ? parse_csv_dataset(aug_bytes, aug_path.string())
                          : parse_jsonl_dataset(aug_bytes, aug_path.string());
  const Dataset validated = validate_dataset(aug, /*require_gold=*/false);
  if (calibration.embeddings.rows() > 0 &&
      calibration.embeddings.cols() != embedding_dimension(validated)) {
    throw ValidationError("artifact embedding dimension " +
                          std::to_string(calibration.embeddings.cols()) +
                          " differs from augmentation dimension " +
                          std::to_string(embedding_dimension(validated)));
  }
  const auto decisions = apply_filter(&calibration, validated, strategy, config, options.workers);

  RunManifest m;
  m.command = "filter";
  m.config = config;
  m.strategy = strategy_text;
  m.inputs.push_back(entry_for(artifact_path, artifact_bytes));
  m.inputs.push_back(entry_for(aug_path, aug_bytes));
  if (options.config_path) m.inputs.push_back(entry_for(*options.config_path, read_file(*options.config_path)));
  publish(out_path, decisions_to_jsonl(decisions), std::move(m));
}

void cmd_simulate(const fs::path& scenario_path, const std::vector<std::string>& strategies,
                  const CommonOptions& options, const fs::path& out_path) {
  if (strategies.empty()) throw ConfigError("simulate needs at least one strategy");
  std::vector<Strategy> parsed;
  for (const auto& s : strategies) {
    try {
      parsed.push_back(Strategy::parse(s));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const FilterConfig config = resolve_config(options);
  const std::string bytes = read_file(scenario_path);
  const ScenarioFile scenario = parse_scenario(bytes, scenario_path.string());

  json doc;
  const ScenarioSpec& s = scenario.spec;
  doc["scenario"] = {
      {"n_cal", s.n_cal},
      {"n_aug", s.n_aug},
      {"K", s.K},
      {"d", s.d},
      {"gold_model", s.gold_model == GoldModel::kHomogeneous ? "homogeneous" : "heterogeneous"},
      {"surrogate_noise_sd", s.surrogate_noise_sd},
      {"seed", s.seed},
      {"gold_mean", s.gold_mean},
      {"region_gap", s.region_gap},
      {"beta_concentration", s.beta_concentration},
      {"feature_noise_sd", s.feature_noise_sd},
  };
  doc["replicates"] = scenario.replicates;
  doc["lambda"] = config.lambda;
  json reports = json::array();
  for (const auto& strategy : parsed) {
    reports.push_back(report_to_json(
        simulate_strategy(s, scenario.replicates, strategy, config, options.workers)));
  }
  doc["reports"] = std::move(reports);

  RunManifest m;
  m.command = "simulate";
  m.config = config;
  std::string joined;
  for (const auto& t : strategies) joined += (joined.empty() ? "" : ",") + t;
  m.strategy = joined;
  m.inputs.push_back(entry_for(scenario_path, bytes));
  if (options.config_path) m.inputs.push_back(entry_for(*options.config_path, read_file(*options.config_path)));
  publish(out_path, dump_json(doc, 2) + "\n", std::move(m));
}

std::string cmd_metrics(const fs::path& decisions_path, const fs::path& gold_path,
                        const CommonOptions& options, const std::optional<fs::path>& out_path) {
  const FilterConfig config = resolve_config(options);
  const std::string decision_bytes = read_file(decisions_path);
  const auto decisions = read_decisions(decisions_path);
  const std::string gold_bytes = read_file(gold_path);
  const Dataset gold = validate_dataset(gold_path.extension() == ".csv"
                                            ? parse_csv_dataset(gold_bytes, gold_path.string())
                                            : parse_jsonl_dataset(gold_bytes, gold_path.string()),
                                        /*require_gold=*/true);
  HiddenGold hidden;
  for (const auto& r : gold) {
    auto& gens = hidden[r.sample_id];
    for (const auto& g : r.generations) gens[g.gen_id] = *g.gold_score;
  }
  if (decisions.empty()) throw ConfigError(decisions_path.string() + ": no decisions");
  for (const auto& d : decisions) {
    const auto it = hidden.find(d.sample_id);
    if (it == hidden.end()) throw ConfigError("sample '" + d.sample_id + "' has no gold record");
    const std::size_t n = d.kept.size() + d.dropped.size();
    if (n != it->second.size()) {
      throw ConfigError("sample '" + d.sample_id + "' decision and gold list different generations");
    }
    for (const auto* list : {&d.kept, &d.dropped}) {
      for (const auto& id : *list) {
        if (!it->second.count(id)) {
          throw ConfigError("generation '" + d.sample_id + "/" + id + "' has no gold score");
        }
      }
    }
  }

  std::map<std::size_t, std::size_t> histogram;
  for (const auto& d : decisions) histogram[realized_loss(d, hidden, config.lambda)] += 1;
  const Prf prf = selection_prf(decisions, hidden, config.lambda);
  json doc;
  doc["n_records"] = decisions.size();
  doc["lambda"] = config.lambda;
  doc["rho"] = config.rho;
  doc["coverage"] = empirical_coverage(decisions, hidden, config.lambda, config.rho);
  doc["precision"] = prf.precision;
  doc["recall"] = prf.recall;
  doc["f1"] = prf.f1;
  doc["prf_degenerate"] = prf.degenerate;
  json hist = json::object();
  for (const auto& [loss, count] : histogram) hist[std::to_string(loss)] = count;
  doc["loss_histogram"] = std::move(hist);
  const std::string text = dump_json(doc, 2) + "\n";

  if (out_path) {
    RunManifest m;
    m.command = "metrics";
    m.config = config;
    m.inputs.push_back(entry_for(decisions_path, decision_bytes));
    m.inputs.push_back(entry_for(gold_path, gold_bytes));
    if (options.config_path) m.inputs.push_back(entry_for(*options.config_path, read_file(*options.config_path)));
    publish(*out_path, text, std::move(m));
  }
  return text;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 2;
  if (dynamic_cast<const SolverError*>(&e)) return 3;
  return 1;
}

}  // namespace condfilter::cli
