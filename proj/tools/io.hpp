#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "condfilter/evalsim.hpp"
#include "condfilter/model.hpp"
#include "condfilter/pipeline.hpp"

namespace condfilter::cli {

/// Missing, unreadable or unwritable files. Maps to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed config, scenario or input content. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string sha256_hex(const std::string& bytes);

/// Serializes with doubles at 17 significant digits; +-inf and nan become
/// the strings "inf", "-inf" and "nan". Object keys keep nlohmann's sorted
/// order, so output is a pure function of the value.
std::string dump_json(const nlohmann::json& value, int indent = -1);

/// Accepts a number or one of the strings dump_json emits for non-finite
/// values.
double json_to_double(const nlohmann::json& value);

/// JSONL (one record per line) or CSV, chosen by the .csv extension.
Dataset read_dataset(const std::filesystem::path& path);
Dataset parse_jsonl_dataset(const std::string& text, const std::string& source);
Dataset parse_csv_dataset(const std::string& text, const std::string& source);

/// Inverse of parse_jsonl_dataset: one record per line, gold written as null
/// when absent.
std::string dataset_to_jsonl(const Dataset& records);

nlohmann::json decision_to_json(const FilterDecision& decision);
FilterDecision decision_from_json(const nlohmann::json& j);
std::string decisions_to_jsonl(const std::vector<FilterDecision>& decisions);
std::vector<FilterDecision> read_decisions(const std::filesystem::path& path);

nlohmann::json config_to_json(const FilterConfig& config);
FilterConfig config_from_json(const nlohmann::json& j);

/// Flat "key = value" document with '#' comments. Keys mirror FilterConfig
/// fields: lambda, rho, alpha, gamma, bandwidth (number or "auto"),
/// randomization (randomized|deterministic), rng_seed, bisection_tol,
/// solver_tol.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses key/value lines; errors name the source and line number.
KeyValues parse_key_values(const std::string& text, const std::string& source);

/// Applies one setting; throws ConfigError naming `where` on bad keys or
/// values.
void apply_config_value(FilterConfig& config, const std::string& key,
                        const std::string& value, const std::string& where);

/// Reads CONDFILTER_<KEY> variables for every config key.
void apply_env_overrides(FilterConfig& config);

/// Scenario keys: n_cal, n_aug, K, d, gold_model (homogeneous|heterogeneous),
/// surrogate_noise_sd, seed, gold_mean, region_gap, beta_concentration,
/// feature_noise_sd, replicates.
struct ScenarioFile {
  ScenarioSpec spec;
  int replicates = 50;
};

ScenarioFile parse_scenario(const std::string& text, const std::string& source);

nlohmann::json calibration_to_json(const Calibration& calibration, const FilterConfig& config);

struct CalibrationArtifact {
  Calibration calibration;
  FilterConfig config;
};

CalibrationArtifact calibration_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const StrategyReport& report);

struct ManifestEntry {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  FilterConfig config;
  std::optional<std::string> strategy;
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
  std::map<std::string, std::string> extra;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);

/// Path of the manifest written next to `output`.
std::filesystem::path manifest_path(const std::filesystem::path& output);

}  // namespace condfilter::cli
