#include "io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#ifndef CONDFILTER_VERSION
#define CONDFILTER_VERSION "0.0.0"
#endif

namespace condfilter::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "\"nan\"";
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void dump_into(std::string& out, const json& v, int indent, int depth) {
  auto newline = [&](int d) {
    if (indent < 0) return;
    out.push_back('\n');
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  const char* colon = indent < 0 ? ":" : ": ";
  switch (v.type()) {
    case json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out.push_back('{');
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        newline(depth + 1);
        out += json(it.key()).dump();
        out += colon;
        dump_into(out, it.value(), indent, depth + 1);
      }
      newline(depth);
      out.push_back('}');
      return;
    }
    case json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      out.push_back('[');
      bool first = true;
      for (const auto& e : v) {
        if (!first) out.push_back(',');
        first = false;
        newline(depth + 1);
        dump_into(out, e, indent, depth + 1);
      }
      newline(depth);
      out.push_back(']');
      return;
    }
    case json::value_t::number_float:
      out += format_double(v.get<double>());
      return;
    default:
      out += v.dump();
      return;
  }
}

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_double(const std::string& text, double& out) {
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end && !text.empty();
}

template <typename Int>
bool parse_int(const std::string& text, Int& out) {
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end && !text.empty();
}

double number_field(const json& j, const char* key, const std::string& at) {
  if (!j.contains(key)) throw ConfigError(at + "missing field '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(at + "field '" + key + "' must be a number");
  return v.get<double>();
}

std::string string_field(const json& j, const char* key, const std::string& at,
                         bool required = true) {
  if (!j.contains(key)) {
    if (required) throw ConfigError(at + "missing field '" + key + "'");
    return {};
  }
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(at + "field '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

std::string dump_json(const json& value, int indent) {
  std::string out;
  dump_into(out, value, indent, 0);
  return out;
}

double json_to_double(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ConfigError("expected a number, got " + value.dump());
}

Dataset read_dataset(const fs::path& path) {
  const std::string text = read_file(path);
  if (path.extension() == ".csv") return parse_csv_dataset(text, path.string());
  return parse_jsonl_dataset(text, path.string());
}

Dataset parse_jsonl_dataset(const std::string& text, const std::string& source) {
  Dataset out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string at = where(source, lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError(at + "invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(at + "record must be a JSON object");
    SampleRecord r;
    r.sample_id = string_field(j, "sample_id", at);
    r.label = string_field(j, "label", at, /*required=*/false);
    if (!j.contains("embedding") || !j["embedding"].is_array()) {
      throw ConfigError(at + "field 'embedding' must be an array of numbers");
    }
    const auto& emb = j["embedding"];
    r.embedding.resize(static_cast<Eigen::Index>(emb.size()));
    for (std::size_t i = 0; i < emb.size(); ++i) {
      if (!emb[i].is_number()) throw ConfigError(at + "embedding entries must be numbers");
      r.embedding[static_cast<Eigen::Index>(i)] = emb[i].get<double>();
    }
    if (!j.contains("generations") || !j["generations"].is_array()) {
      throw ConfigError(at + "field 'generations' must be an array");
    }
    for (const auto& g : j["generations"]) {
      if (!g.is_object()) throw ConfigError(at + "generation must be a JSON object");
      ScoredGeneration gen;
      gen.gen_id = string_field(g, "gen_id", at);
      gen.surrogate_score = number_field(g, "surrogate", at);
      if (g.contains("gold") && !g["gold"].is_null()) gen.gold_score = number_field(g, "gold", at);
      if (g.contains("smoothed") && !g["smoothed"].is_null()) {
        gen.smoothed_surrogate = number_field(g, "smoothed", at);
      }
      r.generations.push_back(std::move(gen));
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, const std::string& at) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw ConfigError(at + "unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

Dataset parse_csv_dataset(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) header = split_csv_line(line, where(source, lineno));
  }
  if (header.empty()) return {};

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  auto require = [&](const std::string& name) {
    const auto it = col.find(name);
    if (it == col.end()) throw ConfigError(where(source, lineno) + "missing column '" + name + "'");
    return it->second;
  };
  const std::size_t c_id = require("sample_id");
  const std::size_t c_gen = require("gen_id");
  const std::size_t c_sur = require("surrogate");
  const auto c_label = col.count("label") ? std::optional(col["label"]) : std::nullopt;
  const auto c_gold = col.count("gold") ? std::optional(col["gold"]) : std::nullopt;
  std::vector<std::size_t> c_emb;
  while (col.count("emb_" + std::to_string(c_emb.size()))) {
    c_emb.push_back(col["emb_" + std::to_string(c_emb.size())]);
  }

  Dataset out;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string at = where(source, lineno);
    const auto f = split_csv_line(line, at);
    if (f.size() != header.size()) {
      throw ConfigError(at + "expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(f.size()));
    }
    Eigen::VectorXd emb(static_cast<Eigen::Index>(c_emb.size()));
    for (std::size_t i = 0; i < c_emb.size(); ++i) {
      double v = 0.0;
      if (!parse_double(trim(f[c_emb[i]]), v)) throw ConfigError(at + "bad embedding value");
      emb[static_cast<Eigen::Index>(i)] = v;
    }
    const std::string id = trim(f[c_id]);
    const std::string label = c_label ? trim(f[*c_label]) : std::string();
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, out.size()).first;
      SampleRecord r;
      r.sample_id = id;
      r.embedding = emb;
      r.label = label;
      out.push_back(std::move(r));
    } else if (out[it->second].embedding != emb || out[it->second].label != label) {
      throw ConfigError(at + "rows of sample '" + id + "' disagree on embedding or label");
    }
    ScoredGeneration g;
    g.gen_id = trim(f[c_gen]);
    if (!parse_double(trim(f[c_sur]), g.surrogate_score)) {
      throw ConfigError(at + "bad surrogate value");
    }
    if (c_gold) {
      const std::string gold = trim(f[*c_gold]);
      if (!gold.empty()) {
        double v = 0.0;
        if (!parse_double(gold, v)) throw ConfigError(at + "bad gold value");
        g.gold_score = v;
      }
    }
    out[it->second].generations.push_back(std::move(g));
  }
  return out;
}

std::string dataset_to_jsonl(const Dataset& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["sample_id"] = r.sample_id;
    j["label"] = r.label;
    j["embedding"] = std::vector<double>(r.embedding.begin(), r.embedding.end());
    json gens = json::array();
    for (const auto& g : r.generations) {
      json jg;
      jg["gen_id"] = g.gen_id;
      jg["surrogate"] = g.surrogate_score;
      jg["gold"] = g.gold_score ? json(*g.gold_score) : json(nullptr);
      if (g.smoothed_surrogate) jg["smoothed"] = *g.smoothed_surrogate;
      gens.push_back(std::move(jg));
    }
    j["generations"] = std::move(gens);
    out += dump_json(j);
    out.push_back('\n');
  }
  return out;
}

json decision_to_json(const FilterDecision& d) {
  json j;
  j["sample_id"] = d.sample_id;
  j["cutoff"] = d.cutoff;
  j["kept"] = d.kept;
  j["dropped"] = d.dropped;
  j["coverage_gap"] = d.coverage_gap_estimate ? json(*d.coverage_gap_estimate) : json(nullptr);
  return j;
}

FilterDecision decision_from_json(const json& j) {
  FilterDecision d;
  d.sample_id = j.at("sample_id").get<std::string>();
  d.cutoff = json_to_double(j.at("cutoff"));
  d.kept = j.at("kept").get<std::vector<std::string>>();
  d.dropped = j.at("dropped").get<std::vector<std::string>>();
  if (j.contains("coverage_gap") && !j["coverage_gap"].is_null()) {
    d.coverage_gap_estimate = json_to_double(j["coverage_gap"]);
  }
  return d;
}

std::string decisions_to_jsonl(const std::vector<FilterDecision>& decisions) {
  std::string out;
  for (const auto& d : decisions) {
    out += dump_json(decision_to_json(d));
    out.push_back('\n');
  }
  return out;
}

std::vector<FilterDecision> read_decisions(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<FilterDecision> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(decision_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(where(path.string(), lineno) + "invalid decision: " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where(path.string(), lineno) + e.what());
    }
  }
  return out;
}

json config_to_json(const FilterConfig& c) {
  json j;
  j["lambda"] = c.lambda;
  j["rho"] = c.rho;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["bandwidth"] = c.bandwidth ? json(*c.bandwidth) : json("auto");
  j["randomization"] =
      c.randomization == Randomization::kDeterministic ? "deterministic" : "randomized";
  j["rng_seed"] = c.rng_seed;
  j["bisection_tol"] = c.bisection_tol;
  j["solver_tol"] = c.solver_tol;
  return j;
}

FilterConfig config_from_json(const json& j) {
  FilterConfig c;
  try {
    c.lambda = j.at("lambda").get<double>();
    c.rho = j.at("rho").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.gamma = j.at("gamma").get<double>();
    const auto& bw = j.at("bandwidth");
    if (bw.is_string() && bw.get<std::string>() == "auto") {
      c.bandwidth.reset();
    } else {
      c.bandwidth = bw.get<double>();
    }
    const auto mode = j.at("randomization").get<std::string>();
    if (mode == "deterministic") {
      c.randomization = Randomization::kDeterministic;
    } else if (mode == "randomized") {
      c.randomization = Randomization::kRandomized;
    } else {
      throw ConfigError("unknown randomization '" + mode + "'");
    }
    c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    c.bisection_tol = j.at("bisection_tol").get<double>();
    c.solver_tol = j.at("solver_tol").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config object: ") + e.what());
  }
  return c;
}

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where(source, lineno) + "expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(where(source, lineno) + "empty key");
    if (value.empty()) throw ConfigError(where(source, lineno) + "empty value for '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

namespace {

constexpr const char* kConfigKeys[] = {"lambda", "rho", "alpha", "gamma", "bandwidth",
                                       "randomization", "rng_seed", "bisection_tol",
                                       "solver_tol"};

double real_value(const std::string& key, const std::string& value, const std::string& at) {
  double v = 0.0;
  if (!parse_double(value, v)) throw ConfigError(at + "'" + key + "' expects a number, got '" + value + "'");
  return v;
}

// Copies field `key` from `from` into a default config so the range check
// reports only this field.
void apply_config_value_unchecked(FilterConfig& into, const FilterConfig& from,
                                  const std::string& key) {
  if (key == "lambda") into.lambda = from.lambda;
  if (key == "rho") into.rho = from.rho;
  if (key == "alpha") into.alpha = from.alpha;
  if (key == "gamma") into.gamma = from.gamma;
  if (key == "bandwidth") into.bandwidth = from.bandwidth;
  if (key == "bisection_tol") into.bisection_tol = from.bisection_tol;
  if (key == "solver_tol") into.solver_tol = from.solver_tol;
}

}  // namespace

void apply_config_value(FilterConfig& c, const std::string& key, const std::string& value,
                        const std::string& at) {
  if (key == "lambda") {
    c.lambda = real_value(key, value, at);
  } else if (key == "rho") {
    if (!parse_int(value, c.rho)) throw ConfigError(at + "'rho' expects an integer, got '" + value + "'");
  } else if (key == "alpha") {
    c.alpha = real_value(key, value, at);
  } else if (key == "gamma") {
    c.gamma = real_value(key, value, at);
  } else if (key == "bandwidth") {
    if (value == "auto") {
      c.bandwidth.reset();
    } else {
      c.bandwidth = real_value(key, value, at);
    }
  } else if (key == "randomization") {
    if (value == "randomized") {
      c.randomization = Randomization::kRandomized;
    } else if (value == "deterministic") {
      c.randomization = Randomization::kDeterministic;
    } else {
      throw ConfigError(at + "'randomization' must be randomized or deterministic");
    }
  } else if (key == "rng_seed") {
    if (!parse_int(value, c.rng_seed)) {
      throw ConfigError(at + "'rng_seed' expects an unsigned 64-bit integer, got '" + value + "'");
    }
  } else if (key == "bisection_tol") {
    c.bisection_tol = real_value(key, value, at);
  } else if (key == "solver_tol") {
    c.solver_tol = real_value(key, value, at);
  } else {
    throw ConfigError(at + "unknown config key '" + key + "'");
  }
  try {
    FilterConfig probe;
    apply_config_value_unchecked(probe, c, key);
    probe.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(at + e.what());
  }
}

void apply_env_overrides(FilterConfig& config) {
  for (const char* key : kConfigKeys) {
    std::string name = "CONDFILTER_";
    for (const char* p = key; *p; ++p) {
      name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(*p))));
    }
    if (const char* v = std::getenv(name.c_str())) {
      apply_config_value(config, key, trim(v), "environment " + name + ": ");
    }
  }
}

ScenarioFile parse_scenario(const std::string& text, const std::string& source) {
  ScenarioFile out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  // Re-split so each error can name its own line.
  while (std::getline(in, line)) {
    ++lineno;
    const auto kv = parse_key_values(line, source);
    if (kv.empty()) continue;
    const auto& [key, value] = kv.front();
    const std::string at = where(source, lineno);
    auto integer = [&](int& dst) {
      if (!parse_int(value, dst)) throw ConfigError(at + "'" + key + "' expects an integer");
    };
    ScenarioSpec& s = out.spec;
    if (key == "n_cal") {
      integer(s.n_cal);
    } else if (key == "n_aug") {
      integer(s.n_aug);
    } else if (key == "K") {
      integer(s.K);
    } else if (key == "d") {
      integer(s.d);
    } else if (key == "replicates") {
      integer(out.replicates);
    } else if (key == "gold_model") {
      if (value == "homogeneous") {
        s.gold_model = GoldModel::kHomogeneous;
      } else if (value == "heterogeneous" || value == "heterogeneous_by_region") {
        s.gold_model = GoldModel::kHeterogeneousByRegion;
      } else {
        throw ConfigError(at + "'gold_model' must be homogeneous or heterogeneous");
      }
    } else if (key == "seed") {
      if (!parse_int(value, s.seed)) throw ConfigError(at + "'seed' expects an unsigned integer");
    } else if (key == "surrogate_noise_sd") {
      s.surrogate_noise_sd = real_value(key, value, at);
    } else if (key == "gold_mean") {
      s.gold_mean = real_value(key, value, at);
    } else if (key == "region_gap") {
      s.region_gap = real_value(key, value, at);
    } else if (key == "beta_concentration") {
      s.beta_concentration = real_value(key, value, at);
    } else if (key == "feature_noise_sd") {
      s.feature_noise_sd = real_value(key, value, at);
    } else {
      throw ConfigError(at + "unknown scenario key '" + key + "'");
    }
  }
  if (out.replicates < 1) throw ConfigError(source + ": replicates must be positive");
  try {
    out.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return out;
}

json calibration_to_json(const Calibration& cal, const FilterConfig& config) {
  json j;
  j["format"] = "condfilter.calibration";
  j["version"] = 1;
  j["config"] = config_to_json(config);
  j["kernel"] = {{"family", "rbf"}, {"bandwidth", cal.kernel.bandwidth}};
  json records = json::array();
  for (std::size_t i = 0; i < cal.sample_ids.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::vector<double> emb(cal.embeddings.row(row).begin(), cal.embeddings.row(row).end());
    records.push_back({{"sample_id", cal.sample_ids[i]},
                       {"score", cal.scores[row]},
                       {"embedding", emb}});
  }
  j["records"] = std::move(records);
  return j;
}

CalibrationArtifact calibration_from_json(const json& j) {
  CalibrationArtifact out;
  try {
    if (j.at("format").get<std::string>() != "condfilter.calibration") {
      throw ConfigError("not a calibration artifact");
    }
    out.config = config_from_json(j.at("config"));
    const auto& kernel = j.at("kernel");
    if (kernel.at("family").get<std::string>() != "rbf") {
      throw ConfigError("unsupported kernel family");
    }
    out.calibration.kernel = KernelSpec(kernel.at("bandwidth").get<double>());
    const auto& records = j.at("records");
    const auto n = static_cast<Eigen::Index>(records.size());
    out.calibration.scores.resize(n);
    std::vector<Eigen::VectorXd> emb;
    for (const auto& r : records) {
      out.calibration.sample_ids.push_back(r.at("sample_id").get<std::string>());
      out.calibration.scores[static_cast<Eigen::Index>(emb.size())] = json_to_double(r.at("score"));
      const auto v = r.at("embedding").get<std::vector<double>>();
      emb.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    for (const auto& e : emb) {
      if (e.size() != emb.front().size()) throw ConfigError("artifact embeddings differ in dimension");
    }
    out.calibration.embeddings = emb.empty() ? AnchorMatrix() : stack_anchors(emb);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid calibration artifact: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid calibration artifact: ") + e.what());
  }
  return out;
}

json report_to_json(const StrategyReport& r) {
  json j;
  j["strategy"] = r.strategy;
  j["alpha"] = r.alpha;
  j["rho"] = r.rho;
  j["n_trials"] = r.n_trials;
  j["coverage"] = r.coverage;
  json regions = json::object();
  for (const auto& [region, tally] : r.per_region) {
    regions[std::to_string(region)] = {
        {"covered", tally.covered}, {"total", tally.total}, {"coverage", tally.rate()}};
  }
  j["per_region"] = std::move(regions);
  j["coverage_sd"] = r.coverage_sd;
  j["coverage_quartiles"] = {r.coverage_q1, r.coverage_median, r.coverage_q3};
  j["precision"] = r.prf.precision;
  j["recall"] = r.prf.recall;
  j["f1"] = r.prf.f1;
  j["prf_degenerate"] = r.prf.degenerate;
  j["stable_rank"] = r.stable_rank ? json(*r.stable_rank) : json(nullptr);
  j["entropy"] = r.entropy ? json(*r.entropy) : json(nullptr);
  return j;
}

json manifest_to_json(const RunManifest& m) {
  json j;
  j["tool"] = "condfilter";
  j["version"] = CONDFILTER_VERSION;
  j["command"] = m.command;
  j["config"] = config_to_json(m.config);
  j["seed"] = m.config.rng_seed;
  j["strategy"] = m.strategy ? json(*m.strategy) : json(nullptr);
  auto entries = [](const std::vector<ManifestEntry>& list) {
    json a = json::array();
    for (const auto& e : list) a.push_back({{"path", e.path}, {"sha256", e.sha256}});
    return a;
  };
  j["inputs"] = entries(m.inputs);
  j["outputs"] = entries(m.outputs);
  for (const auto& [k, v] : m.extra) j[k] = v;
  return j;
}

fs::path manifest_path(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

}  // namespace condfilter::cli
