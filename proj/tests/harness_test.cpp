#include "mirrorless/harness/suite.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

using namespace mirrorless;
using namespace mirrorless::harness;
namespace fs = std::filesystem;

namespace {

Json minimal() {
  return Json::parse(R"({
    "name": "minimal",
    "seed": 1,
    "geometry": {"kind": "euclidean"},
    "objective": {"name": "quadratic", "params": {"Q": [[1, 0], [0, 1]], "b": [0, 0]}},
    "method": {"method": "ngd", "eta": 0.1, "iterations": 10, "w_init": [1, 1]}
  })");
}

std::vector<std::string> violations_of(const Json& doc) {
  try {
    parse_config(doc.dump());
  } catch (const ConfigError& e) {
    return e.violations();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& xs, const std::string& needle) {
  for (const auto& x : xs)
    if (x.find(needle) != std::string::npos) return true;
  return false;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("mirrorless_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

std::vector<std::string> cells_of(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-0.4), "-0.4");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, i % 40 - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
}

TEST(ParseConfig, MinimalConfigIsValid) {
  const ExperimentConfig cfg = parse_config(minimal().dump());
  EXPECT_EQ(cfg.name, "minimal");
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.run.method, Method::ngd);
  EXPECT_EQ(cfg.run.iterations, 10u);
  EXPECT_EQ(cfg.geometry.dim(), 2);
  EXPECT_FALSE(cfg.geometry.potential);
  EXPECT_EQ(cfg.objective->dim(), 2);
}

TEST(ParseConfig, ClassicMdRequiresPotential) {
  Json doc = minimal();
  doc["geometry"]["kind"] = "rank_one_bump";
  doc["method"]["method"] = "md_classic";
  EXPECT_TRUE(any_contains(violations_of(doc), "classic MD requires a potential"));

  doc["geometry"]["kind"] = "sq_euclidean";
  EXPECT_TRUE(violations_of(doc).empty());
}

TEST(ParseConfig, NonIntegerScaleRatioRejected) {
  Json doc = minimal();
  doc["geometry"]["kind"] = "sq_euclidean";
  doc["objective"] = Json::parse(R"({"name": "least_squares_stochastic", "params": {"A": [[1, 0], [0, 1]], "b": [1, 2]}})");
  doc["method"]["method"] = "md_mirrorless";
  doc["method"]["eta"] = 0.2;
  doc["method"]["stochastic"] = {{"nu", 0.06}};
  EXPECT_TRUE(any_contains(violations_of(doc), "non-integer ratio"));
  doc["method"]["stochastic"]["nu"] = 0.04;
  EXPECT_TRUE(violations_of(doc).empty());
}

TEST(ParseConfig, CollectsEveryViolation) {
  Json doc = minimal();
  doc["colour"] = "blue";
  doc["method"].erase("eta");
  doc["method"]["flow_mode"] = "fast";
  doc["geometry"]["extra"] = 1;
  doc["analyses"] = Json::array({{{"op", "rate_bound_check"}}});
  const auto v = violations_of(doc);
  EXPECT_GE(v.size(), 5u);
  EXPECT_TRUE(any_contains(v, "$.colour: unknown key"));
  EXPECT_TRUE(any_contains(v, "$.method.eta: required key missing"));
  EXPECT_TRUE(any_contains(v, "$.method.flow_mode"));
  EXPECT_TRUE(any_contains(v, "$.geometry.extra: unknown key"));
  EXPECT_TRUE(any_contains(v, "$.analyses[0].alpha"));
}

TEST(ParseConfig, SemanticViolationsAreCollectedTogether) {
  Json doc = minimal();
  doc["geometry"]["kind"] = "rank_one_bump";
  doc["method"]["method"] = "md_classic";
  doc["objective"]["params"]["Q"] = Json::parse("[[1,0,0],[0,1,0],[0,0,1]]");
  doc["objective"]["params"]["b"] = Json::parse("[0,0,0]");
  const auto v = violations_of(doc);
  EXPECT_TRUE(any_contains(v, "classic MD requires a potential"));
  EXPECT_TRUE(any_contains(v, "does not match"));
}

TEST(ParseConfig, Errors) {
  EXPECT_THROW(parse_config("{\"name\": "), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);

  Json doc = minimal();
  doc["geometry"]["kind"] = "hyperbolic";
  EXPECT_TRUE(any_contains(violations_of(doc), "unknown geometry"));

  doc = minimal();
  doc["objective"]["random"] = {{"d", 2}};
  EXPECT_TRUE(any_contains(violations_of(doc), "exactly one of"));

  doc = minimal();
  doc["geometry"]["kind"] = "neg_entropy";
  doc["method"]["w_init"] = {1, -1};
  EXPECT_TRUE(any_contains(violations_of(doc), "outside the domain"));

  doc = minimal();
  doc["method"]["method"] = "adam";
  EXPECT_FALSE(violations_of(doc).empty());

  doc = minimal();
  doc["analyses"] = Json::array({{{"op", "implicit_bias"}}, {{"op", "fly"}}});
  const auto v = violations_of(doc);
  EXPECT_TRUE(any_contains(v, "unknown analysis 'fly'"));

  doc = minimal();
  doc["analyses"] = Json::array({{{"op", "discretization_error_sweep"}, {"horizon", 1.0}, {"etas", {0.3}}}});
  EXPECT_TRUE(any_contains(violations_of(doc), "integer multiple"));
}

TEST(ParseConfig, SeedDeterminesRandomObjective) {
  Json doc = minimal();
  doc["objective"] = {{"name", "least_squares"}, {"random", {{"n", 4}, {"d", 2}}}};
  auto gram = [](const ExperimentConfig& c) {
    return dynamic_cast<const LeastSquaresObjective&>(*c.objective).a();
  };
  const Matrix a1 = gram(parse_config(doc.dump()));
  const Matrix a2 = gram(parse_config(doc.dump()));
  EXPECT_EQ(a1, a2);
  const Matrix a3 = gram(parse_config(doc.dump(), ".", {std::uint64_t{2}, std::nullopt}));
  EXPECT_NE(a1, a3);

  doc["objective"]["random"]["smoothness"] = 3.0;
  EXPECT_NEAR(*parse_config(doc.dump()).objective->smoothness(), 3.0, 1e-12);
}

TEST(ParseConfig, CsvObjectiveResolvesAgainstBaseDir) {
  TempDir tmp;
  write_text((tmp.path() / "data.csv").string(), "a1,a2,b\n1,0,1\n0,2,4\n1,1,0\n");
  Json doc = minimal();
  doc["objective"] = {{"name", "least_squares"}, {"csv", "data.csv"}};
  write_text((tmp.path() / "cfg.json").string(), doc.dump());
  const ExperimentConfig cfg = parse_config_file((tmp.path() / "cfg.json").string());
  const auto& ls = dynamic_cast<const LeastSquaresObjective&>(*cfg.objective);
  EXPECT_EQ(ls.a().rows(), 3);
  EXPECT_DOUBLE_EQ(ls.a()(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(ls.b()(1), 4.0);
  EXPECT_THROW(parse_config(doc.dump(), "/nonexistent"), ConfigError);
}

TEST(ParseConfig, ToleranceOverride) {
  const ExperimentConfig cfg = parse_config(minimal().dump(), ".", {std::nullopt, 1e-6});
  EXPECT_DOUBLE_EQ(cfg.run.tol, 1e-6);
  EXPECT_DOUBLE_EQ(cfg.source["method"]["tol"].get<double>(), 1e-6);
}

TEST(RunExperiment, WritesArtifacts) {
  TempDir tmp;
  const ExperimentConfig cfg = parse_config(minimal().dump());
  const ExperimentResult res = run_experiment(cfg, tmp.str());
  ASSERT_TRUE(res.ok()) << res.error.value_or("");
  const fs::path dir = tmp.path() / "minimal";
  for (const char* f : {"trajectory.csv", "summary.json", "run_meta.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "error.json"));

  const Json summary = Json::parse(read_text((dir / "summary.json").string()));
  EXPECT_EQ(summary["status"], "ok");
  EXPECT_EQ(summary["final_iterate"].size(), 2u);
  // ngd on F = |w|^2 / 2: w_k = 0.9^k w_0.
  EXPECT_NEAR(summary["final_iterate"][0].get<double>(), std::pow(0.9, 10), 1e-15);
  const Json meta = Json::parse(read_text((dir / "run_meta.json").string()));
  EXPECT_EQ(meta["version"], kVersion);
  EXPECT_EQ(meta["seed"], 1);
  EXPECT_EQ(meta["config"]["name"], "minimal");
  EXPECT_GE(meta["wall_seconds"].get<double>(), 0.0);
}

TEST(RunExperiment, TrajectoryCsvColumns) {
  TempDir tmp;
  for (int d : {1, 2, 5}) {
    Json doc = minimal();
    doc["name"] = "cols" + std::to_string(d);
    doc["objective"] = {{"name", "quadratic"}, {"random", {{"d", d}}}};
    doc["method"]["w_init"] = std::vector<double>(static_cast<std::size_t>(d), 0.5);
    const ExperimentResult res = run_experiment(parse_config(doc.dump()), tmp.str());
    const auto lines = lines_of(read_text(res.output_dir + "/trajectory.csv"));
    ASSERT_EQ(lines.size(), 12u);
    for (const auto& line : lines) EXPECT_EQ(cells_of(line).size(), static_cast<std::size_t>(d + 5)) << line;
    EXPECT_EQ(cells_of(lines[0]).front(), "k");
    EXPECT_EQ(cells_of(lines[0]).back(), "substeps");
  }
}

TEST(RunExperiment, EquivalenceConfigReportsSmallDeviation) {
  TempDir tmp;
  Json doc = minimal();
  doc["name"] = "equivalence";
  doc["geometry"] = {{"kind", "neg_entropy"}};
  doc["objective"] = {{"name", "least_squares"}, {"random", {{"n", 4}, {"d", 2}, {"smoothness", 2.0}}}};
  doc["method"] = {{"method", "md_mirrorless"}, {"eta", 0.1}, {"iterations", 20}, {"w_init", {0.5, 0.5}}, {"tol", 1e-10}};
  doc["analyses"] = Json::array({{{"op", "theorem1_check"}}});
  const ExperimentResult res = run_experiment(parse_config(doc.dump()), tmp.str());
  ASSERT_TRUE(res.ok()) << res.error.value_or("");
  EXPECT_LE(res.summary["analyses"]["theorem1_check"]["max_deviation"].get<double>(), 1e-8);
}

TEST(RunExperiment, RankOneBumpHessianMapWitness) {
  Json doc = minimal();
  doc["geometry"]["kind"] = "rank_one_bump";
  doc["method"]["w_init"] = {1, 2};
  doc["analyses"] = Json::array({{{"op", "hessian_map_check"}, {"points", {{1, 2}}}}});
  const ExperimentResult res = run_experiment(parse_config(doc.dump()), "");
  const Json& r = res.summary["analyses"]["hessian_map_check"];
  EXPECT_FALSE(r["is_hessian_map"].get<bool>());
  EXPECT_NEAR(r["witness_violation"].get<double>(), 2.0, 1e-2);
  EXPECT_EQ(r["witness_point"], Json::parse("[1.0, 2.0]"));
  EXPECT_EQ(r["witness_indices"].size(), 3u);
}

TEST(RunExperiment, EuclideanFlowEndsAtInverseE) {
  TempDir tmp;
  Json doc = minimal();
  doc["method"] = {{"method", "flow_reference"}, {"eta", 0.5}, {"iterations", 2}, {"w_init", {1, 0}}};
  const ExperimentResult res = run_experiment(parse_config(doc.dump()), tmp.str());
  const auto lines = lines_of(read_text(res.output_dir + "/trajectory.csv"));
  const auto last = cells_of(lines.back());
  EXPECT_EQ(last[0], "2");
  EXPECT_DOUBLE_EQ(std::stod(last[1]), 1.0);
  EXPECT_NEAR(std::stod(last[2]), std::exp(-1.0), 1e-9);
  EXPECT_NEAR(std::stod(last[3]), 0.0, 1e-12);
}

TEST(RunExperiment, RerunsAreByteIdentical) {
  TempDir tmp;
  Json doc = minimal();
  doc["geometry"] = {{"kind", "neg_entropy"}};
  doc["objective"] = {{"name", "least_squares_stochastic"}, {"random", {{"n", 7}, {"d", 2}}}};
  doc["method"] = {{"method", "md_mirrorless"}, {"eta", 0.2}, {"iterations", 15}, {"w_init", {0.3, 0.7}},
                   {"stochastic", {{"nu", 0.05}}}};
  std::vector<std::string> csvs;
  for (const char* out : {"a", "b"}) {
    doc["output"] = out;
    csvs.push_back(read_text(run_experiment(parse_config(doc.dump()), tmp.str()).output_dir + "/trajectory.csv"));
  }
  EXPECT_EQ(csvs[0], csvs[1]);
  doc["output"] = "c";
  const ExperimentConfig other = parse_config(doc.dump(), ".", {std::uint64_t{99}, std::nullopt});
  EXPECT_NE(csvs[0], read_text(run_experiment(other, tmp.str()).output_dir + "/trajectory.csv"));
}

TEST(RunExperiment, FailureKeepsPartialTrajectoryAndErrorRecord) {
  TempDir tmp;
  Json doc = minimal();
  doc["name"] = "overshoot";
  doc["geometry"] = {{"kind", "hessian_of"}, {"params", {{"potential", "neg_entropy"}}}};
  doc["objective"]["params"]["b"] = {-20, -20};
  doc["method"] = {{"method", "ngd"}, {"eta", 0.1}, {"iterations", 5}, {"w_init", {1, 1}}};
  const ExperimentResult res = run_experiment(parse_config(doc.dump()), tmp.str());
  EXPECT_EQ(res.status, "failed");
  ASSERT_TRUE(res.error.has_value());
  const Json err = Json::parse(read_text(res.output_dir + "/error.json"));
  EXPECT_EQ(err["status"], "failed");
  EXPECT_EQ(err["failure"]["iteration"], 0);
  EXPECT_EQ(lines_of(read_text(res.output_dir + "/trajectory.csv")).size(), 2u);
  EXPECT_EQ(Json::parse(read_text(res.output_dir + "/summary.json"))["status"], "failed");
}

TEST(RunExperiment, OutputRootResolution) {
  EXPECT_EQ(resolve_output_root(std::string("x")), "x");
  ::setenv("MIRRORLESS_OUTPUT_DIR", "/tmp/from_env", 1);
  EXPECT_EQ(resolve_output_root(std::nullopt), "/tmp/from_env");
  EXPECT_EQ(resolve_output_root(std::string("flag")), "flag");
  ::unsetenv("MIRRORLESS_OUTPUT_DIR");
  EXPECT_EQ(resolve_output_root(std::nullopt), "runs");
}

TEST(Suite, LookupAndOperators) {
  const Json s = Json::parse(R"({"a": {"b": [1.5, 2.5]}, "ok": true})");
  ASSERT_NE(harness::detail::lookup(s, "a.b.1"), nullptr);
  EXPECT_EQ(*harness::detail::lookup(s, "a.b.1"), 2.5);
  EXPECT_EQ(harness::detail::lookup(s, "a.b.2"), nullptr);
  EXPECT_EQ(harness::detail::lookup(s, "a.c"), nullptr);
  EXPECT_TRUE(harness::detail::evaluate(s["ok"], "==", true, 0));
  EXPECT_TRUE(harness::detail::evaluate(2.5, "near", 2.4, 0.2));
  EXPECT_FALSE(harness::detail::evaluate(2.5, "near", 2.4, 0.05));
  EXPECT_TRUE(harness::detail::evaluate(s["a"]["b"], "all_in", Json::array({1, 3}), 0));
  EXPECT_FALSE(harness::detail::evaluate(s["a"]["b"], "all_in", Json::array({2, 3}), 0));
  EXPECT_TRUE(harness::detail::evaluate(1e-9, "<=", 1e-8, 0));
  EXPECT_FALSE(harness::detail::evaluate("x", "<=", 1, 0));
  EXPECT_THROW(harness::detail::evaluate(1, "~", 1, 0), InvalidArgument);
}

TEST(Suite, QuickSuitePasses) {
  TempDir tmp;
  SuiteOptions opt;
  opt.output_root = tmp.str();
  const auto start = std::chrono::steady_clock::now();
  const SuiteReport rep = run_suite("quick", opt);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
  EXPECT_TRUE(rep.passed);
  for (const auto& c : rep.criteria) EXPECT_TRUE(c.passed) << c.id;
  const Json report = Json::parse(read_text((tmp.path() / "quick" / "suite_report.json").string()));
  EXPECT_EQ(report["passed"], true);
  EXPECT_EQ(report["criteria"].size(), rep.criteria.size());
}

TEST(Suite, CorruptedToleranceFailsAndNamesCriterion) {
  TempDir tmp;
  const fs::path suite_dir = tmp.path() / "suite";
  fs::create_directories(suite_dir);
  const fs::path quick = fs::path(kDefaultConfigDir) / "quick";
  for (const char* f : {"c3_rate_bound.json", "c8_reference.json"}) {
    Json crit = Json::parse(read_text((quick / f).string()));
    for (auto& run : crit["runs"]) run["config"] = (quick / run["config"].get<std::string>()).string();
    if (std::string(f) == "c8_reference.json") crit["runs"][0]["expect"][0]["tol"] = 1e-30;
    write_text((suite_dir / f).string(), crit.dump(2));
  }
  SuiteOptions opt;
  opt.output_root = (tmp.path() / "out").string();
  opt.suite_dir = suite_dir.string();
  opt.jobs = 2;
  const SuiteReport rep = run_suite("negative", opt);
  EXPECT_FALSE(rep.passed);
  ASSERT_EQ(rep.criteria.size(), 2u);
  EXPECT_TRUE(rep.criteria[0].passed);
  EXPECT_EQ(rep.criteria[1].id, "8");
  EXPECT_FALSE(rep.criteria[1].passed);
  const Json report = Json::parse(read_text((tmp.path() / "out" / "negative" / "suite_report.json").string()));
  EXPECT_EQ(report["passed"], false);
  EXPECT_EQ(report["criteria"][1]["criterion"], "8");
  EXPECT_EQ(report["criteria"][1]["runs"][0]["checks"][0]["passed"], false);
}

TEST(Suite, MissingConfigIsReported) {
  TempDir tmp;
  write_text((tmp.path() / "c1.json").string(),
             R"({"criterion": "1", "runs": [{"config": "missing.json", "expect": []}]})");
  SuiteOptions opt;
  opt.output_root = (tmp.path() / "out").string();
  opt.suite_dir = tmp.str();
  const SuiteReport rep = run_suite("broken", opt);
  EXPECT_FALSE(rep.passed);
  EXPECT_FALSE(rep.criteria[0].runs[0].passed);
  opt.suite_dir = (tmp.path() / "nowhere").string();
  EXPECT_THROW(run_suite("broken", opt), InvalidArgument);
}
