#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace condfilter::cli {
namespace {

using testing::make_record;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("condfilter-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CONDFILTER_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Dataset small_calibration() {
  Dataset d;
  for (int i = 0; i < 12; ++i) {
    const double x = 0.25 * i;
    d.push_back(make_record("c" + std::to_string(i), {x, 1.0 - x}, {0.9, 0.6, 0.3},
                            {0.7, i % 3 == 0 ? 0.4 : 0.6, 0.8}));
  }
  return d;
}

Dataset small_augmentation() {
  Dataset d;
  for (int i = 0; i < 4; ++i) {
    d.push_back(make_record("a" + std::to_string(i), {0.3 * i, 0.1}, {0.95, 0.5, 0.2}));
  }
  return d;
}

TEST(DumpJson, SeventeenDigitsAndNonFinite) {
  nlohmann::json j;
  j["x"] = 0.1;
  j["inf"] = std::numeric_limits<double>::infinity();
  j["ninf"] = -std::numeric_limits<double>::infinity();
  j["n"] = 3;
  EXPECT_EQ(dump_json(j), R"({"inf":"inf","n":3,"ninf":"-inf","x":0.10000000000000001})");
  EXPECT_EQ(json_to_double(nlohmann::json("inf")), std::numeric_limits<double>::infinity());
  EXPECT_EQ(json_to_double(nlohmann::json::parse(dump_json(j))["x"]), 0.1);
  EXPECT_THROW(json_to_double(nlohmann::json("x")), ConfigError);
}

TEST(DatasetIo, JsonlRoundTrip) {
  Dataset d = small_calibration();
  d[0].generations[1].gold_score.reset();
  d[1].generations[0].smoothed_surrogate = 0.123456789012345678;
  d[2].embedding[0] = 1.0 / 3.0;
  const std::string text = dataset_to_jsonl(d);
  EXPECT_EQ(parse_jsonl_dataset(text, "mem"), d);
  EXPECT_EQ(dataset_to_jsonl(parse_jsonl_dataset(text, "mem")), text);
}

TEST(DatasetIo, JsonlErrorsNameTheLine) {
  const std::string text =
      R"({"sample_id":"a","embedding":[0],"generations":[{"gen_id":"g","surrogate":0.5}]})"
      "\n{not json}\n";
  try {
    parse_jsonl_dataset(text, "in.jsonl");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("in.jsonl:2:"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, CsvGroupsRowsBySample) {
  const std::string csv =
      "sample_id,label,emb_0,emb_1,gen_id,surrogate,gold\n"
      "b,y,1,2,g0,0.5,0.9\n"
      "a,n,0,0,g0,0.1,\n"
      "b,y,1,2,g1,0.7,0.2\n";
  const Dataset d = parse_csv_dataset(csv, "x.csv");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].sample_id, "b");
  EXPECT_EQ(d[0].generations.size(), 2u);
  EXPECT_EQ(d[0].embedding, Eigen::Vector2d(1, 2));
  EXPECT_EQ(*d[0].generations[1].gold_score, 0.2);
  EXPECT_FALSE(d[1].generations[0].gold_score.has_value());
  EXPECT_THROW(parse_csv_dataset(csv + "b,y,9,2,g2,0.1,0.1\n", "x.csv"), ConfigError);
}

TEST(DecisionIo, RoundTrip) {
  FilterDecision d;
  d.sample_id = "s";
  d.cutoff = -std::numeric_limits<double>::infinity();
  d.kept = {"g0"};
  d.dropped = {"g1", "g2"};
  EXPECT_EQ(decision_from_json(decision_to_json(d)), d);
  d.coverage_gap_estimate = -0.01;
  d.cutoff = 0.7;
  EXPECT_EQ(decision_from_json(nlohmann::json::parse(dump_json(decision_to_json(d)))), d);
}

TEST(ConfigIo, KeyValuesWithComments) {
  const KeyValues kv = parse_key_values("# header\nalpha = 0.2\n\nbandwidth=auto # trailing\n", "c");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"alpha", "0.2"}));
  EXPECT_EQ(kv[1].second, "auto");
  EXPECT_THROW(parse_key_values("alpha 0.2\n", "c"), ConfigError);
}

TEST(ConfigIo, BadValuesNameTheLine) {
  TempDir tmp;
  write(tmp / "bad.cfg", "lambda = 0.5\n# ok\nalpha = 1.5\n");
  CommonOptions o;
  o.config_path = tmp / "bad.cfg";
  try {
    resolve_config(o);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.cfg:3"), std::string::npos) << e.what();
  }
  write(tmp / "unknown.cfg", "alpah = 0.1\n");
  o.config_path = tmp / "unknown.cfg";
  EXPECT_THROW(resolve_config(o), ConfigError);
}

TEST(ConfigIo, PrecedenceFileEnvFlag) {
  TempDir tmp;
  write(tmp / "c.cfg", "alpha = 0.2\ngamma = 3\nrho = 2\nrandomization = deterministic\n");
  CommonOptions o;
  o.config_path = tmp / "c.cfg";
  ::setenv("CONDFILTER_GAMMA", "4", 1);
  ::setenv("CONDFILTER_RHO", "1", 1);
  o.flag_overrides = {{"rho", "0"}};
  const FilterConfig c = resolve_config(o);
  ::unsetenv("CONDFILTER_GAMMA");
  ::unsetenv("CONDFILTER_RHO");
  EXPECT_EQ(c.alpha, 0.2);
  EXPECT_EQ(c.gamma, 4.0);
  EXPECT_EQ(c.rho, 0);
  EXPECT_EQ(c.randomization, Randomization::kDeterministic);
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
}

TEST(ScenarioIo, ParsesKeys) {
  const ScenarioFile s = parse_scenario(
      "n_cal = 10\nK = 3\ngold_model = heterogeneous\nregion_gap = 0.2\nreplicates = 4\n", "s");
  EXPECT_EQ(s.spec.n_cal, 10);
  EXPECT_EQ(s.spec.K, 3);
  EXPECT_EQ(s.spec.gold_model, GoldModel::kHeterogeneousByRegion);
  EXPECT_EQ(s.spec.region_gap, 0.2);
  EXPECT_EQ(s.replicates, 4);
  EXPECT_THROW(parse_scenario("gold_model = odd\n", "s"), ConfigError);
}

TEST(CalibrationIo, RoundTrip) {
  FilterConfig c;
  c.bandwidth = 0.75;
  const Calibration cal = calibrate(small_calibration(), c);
  const CalibrationArtifact back =
      calibration_from_json(nlohmann::json::parse(dump_json(calibration_to_json(cal, c))));
  EXPECT_EQ(back.config, c);
  EXPECT_EQ(back.calibration.sample_ids, cal.sample_ids);
  EXPECT_EQ(back.calibration.scores, cal.scores);
  EXPECT_EQ(back.calibration.embeddings, cal.embeddings);
  EXPECT_EQ(back.calibration.kernel.bandwidth, 0.75);
}

TEST(Commands, CalibrateFilterMetrics) {
  TempDir tmp;
  write(tmp / "cal.jsonl", dataset_to_jsonl(small_calibration()));
  write(tmp / "aug.jsonl", dataset_to_jsonl(small_augmentation()));
  CommonOptions o;
  o.workers = 1;
  cmd_calibrate(tmp / "cal.jsonl", o, tmp / "art.json");
  EXPECT_TRUE(fs::exists(manifest_path(tmp / "art.json")));

  cmd_filter(tmp / "art.json", tmp / "aug.jsonl", "unfiltered", o, tmp / "keep.jsonl");
  const auto keep = read_decisions(tmp / "keep.jsonl");
  ASSERT_EQ(keep.size(), 4u);
  for (const auto& d : keep) EXPECT_EQ(d.kept.size(), 3u);

  cmd_filter(tmp / "art.json", tmp / "aug.jsonl", "conditional_cp", o, tmp / "cp.jsonl");
  EXPECT_EQ(read_decisions(tmp / "cp.jsonl").size(), 4u);

  // Gold for the augmentation records: first generation good, rest bad.
  Dataset gold = small_augmentation();
  for (auto& r : gold) {
    for (std::size_t k = 0; k < r.generations.size(); ++k) r.generations[k].gold_score = k == 0 ? 0.9 : 0.1;
  }
  write(tmp / "gold.jsonl", dataset_to_jsonl(gold));
  const auto m = nlohmann::json::parse(cmd_metrics(tmp / "keep.jsonl", tmp / "gold.jsonl", o, {}));
  EXPECT_EQ(m["coverage"].get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(m["precision"].get<double>(), 1.0 / 3.0);
  EXPECT_EQ(m["recall"].get<double>(), 1.0);
  EXPECT_EQ(m["loss_histogram"]["2"].get<int>(), 4);
}

TEST(Commands, FilterRejectsMismatchedInputs) {
  TempDir tmp;
  write(tmp / "cal.jsonl", dataset_to_jsonl(small_calibration()));
  Dataset wide = small_augmentation();
  for (auto& r : wide) r.embedding = Eigen::Vector3d(0.0, 1.0, 2.0);
  write(tmp / "wide.jsonl", dataset_to_jsonl(wide));
  CommonOptions o;
  cmd_calibrate(tmp / "cal.jsonl", o, tmp / "art.json");
  EXPECT_THROW(cmd_filter(tmp / "art.json", tmp / "wide.jsonl", "conditional_cp", o,
                          tmp / "out.jsonl"),
               ValidationError);
  write(tmp / "aug.jsonl", dataset_to_jsonl(small_augmentation()));
  EXPECT_THROW(cmd_filter(tmp / "art.json", tmp / "aug.jsonl", "best", o, tmp / "out.jsonl"),
               ConfigError);
  CommonOptions other;
  other.flag_overrides = {{"lambda", "0.6"}};
  EXPECT_THROW(cmd_filter(tmp / "art.json", tmp / "aug.jsonl", "marginal_cp", other,
                          tmp / "out.jsonl"),
               ConfigError);
  EXPECT_THROW(cmd_filter(tmp / "missing.json", tmp / "aug.jsonl", "marginal_cp", o,
                          tmp / "out.jsonl"),
               IoError);
}

TEST(Binary, ExitCodes) {
  TempDir tmp;
  Dataset cal = small_calibration();
  write(tmp / "cal.jsonl", dataset_to_jsonl(cal));
  cal[0].generations[0].gold_score.reset();
  write(tmp / "nogold.jsonl", dataset_to_jsonl(cal));
  const std::string out = (tmp / "art.json").string();
  EXPECT_EQ(run("calibrate --cal " + (tmp / "cal.jsonl").string() + " --out " + out), 0);
  EXPECT_EQ(run("calibrate --cal " + (tmp / "nogold.jsonl").string() + " --out " + out), 1);
  EXPECT_EQ(run("calibrate --cal " + (tmp / "absent.jsonl").string() + " --out " + out), 2);
  EXPECT_EQ(run("--alpha 2 calibrate --cal " + (tmp / "cal.jsonl").string() + " --out " + out), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

}  // namespace
}  // namespace condfilter::cli
