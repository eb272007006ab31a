#pragma once

// Suites: a directory of criterion files, each listing experiment configs and
// expectations on their summary.json. Runs execute on a bounded thread pool.

#include "mirrorless/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mirrorless::harness {

struct CheckResult {
  std::string path;
  std::string op;
  Json expected;
  Json actual;
  bool passed = false;
};

struct RunOutcome {
  std::string config;
  std::string name;
  std::string status;
  std::optional<std::string> error;
  std::vector<CheckResult> checks;
  bool passed = false;
};

struct CriterionOutcome {
  std::string id;
  std::string title;
  std::string file;
  std::vector<RunOutcome> runs;
  std::optional<std::string> error;  // the criterion file itself is broken
  bool passed = false;
};

struct SuiteReport {
  std::string suite;
  std::string output_dir;
  std::vector<CriterionOutcome> criteria;
  bool passed = false;
};

struct SuiteOptions {
  std::string output_root = "runs";
  std::optional<std::string> suite_dir;  // default: <config dir>/<suite name>
  unsigned jobs = 0;                     // 0: hardware concurrency
};

#ifdef MIRRORLESS_CONFIG_DIR
inline constexpr const char* kDefaultConfigDir = MIRRORLESS_CONFIG_DIR;
#else
inline constexpr const char* kDefaultConfigDir = "configs";
#endif

namespace detail {

/// Dotted lookup; numeric segments index arrays ("final_iterate.0").
inline const Json* lookup(const Json& root, const std::string& path) {
  const Json* cur = &root;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (cur->is_object()) {
      if (!cur->contains(key)) return nullptr;
      cur = &(*cur)[key];
    } else if (cur->is_array()) {
      std::size_t idx = 0;
      const auto res = std::from_chars(key.data(), key.data() + key.size(), idx);
      if (res.ec != std::errc() || res.ptr != key.data() + key.size() || idx >= cur->size()) return nullptr;
      cur = &(*cur)[idx];
    } else {
      return nullptr;
    }
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return cur;
}

inline bool in_range(const Json& x, const Json& range) {
  return x.is_number() && range.is_array() && range.size() == 2 && x.get<double>() >= range[0].get<double>() &&
         x.get<double>() <= range[1].get<double>();
}

inline bool evaluate(const Json& actual, const std::string& op, const Json& expected, double tol) {
  if (op == "==") return actual == expected;
  if (op == "!=") return actual != expected;
  if (op == "exists") return true;
  if (op == "in") return in_range(actual, expected);
  if (op == "all_in") {
    return actual.is_array() && !actual.empty() &&
           std::all_of(actual.begin(), actual.end(), [&](const Json& x) { return in_range(x, expected); });
  }
  if (!actual.is_number() || !expected.is_number()) return false;
  const double a = actual.get<double>();
  const double e = expected.get<double>();
  if (op == "<=") return a <= e;
  if (op == ">=") return a >= e;
  if (op == "<") return a < e;
  if (op == ">") return a > e;
  if (op == "near") return std::abs(a - e) <= tol;
  throw InvalidArgument("unknown expectation operator '" + op + "'");
}

struct Task {
  std::size_t criterion;
  std::size_t run;
  std::filesystem::path config;
  Json spec;
  std::filesystem::path out_dir;
};

inline RunOutcome execute(const Task& task) {
  RunOutcome out;
  out.config = task.config.string();
  const int repeat = task.spec.value("repeat", 1);
  Json summary;
  try {
    const ExperimentConfig cfg = parse_config_file(task.config.string());
    out.name = cfg.name;
    std::vector<std::string> csvs;
    std::vector<std::string> summaries;
    for (int r = 0; r < repeat; ++r) {
      const auto root = repeat > 1 ? task.out_dir / ("repeat_" + std::to_string(r)) : task.out_dir;
      const ExperimentResult res = run_experiment(cfg, root.string());
      out.status = res.status;
      out.error = res.error;
      summary = res.summary;
      csvs.push_back(read_text((std::filesystem::path(res.output_dir) / "trajectory.csv").string()));
      summaries.push_back(read_text((std::filesystem::path(res.output_dir) / "summary.json").string()));
    }
    if (repeat > 1) {
      bool same = true;
      for (std::size_t i = 1; i < csvs.size(); ++i) same = same && csvs[i] == csvs[0] && summaries[i] == summaries[0];
      summary["suite"] = {{"reproducible", same}, {"repeats", repeat}};
    }
  } catch (const ConfigError& e) {
    out.status = "invalid";
    out.error = e.what();
  } catch (const std::exception& e) {
    out.status = "error";
    out.error = e.what();
  }

  out.passed = out.status == "ok" || task.spec.value("allow_failure", false);
  if (out.status == "invalid") out.passed = false;
  for (const auto& ex : task.spec.value("expect", Json::array())) {
    CheckResult c;
    c.path = ex.value("path", "");
    c.op = ex.value("op", "==");
    c.expected = ex.contains("value") ? ex["value"] : Json(nullptr);
    const Json* actual = summary.is_null() ? nullptr : lookup(summary, c.path);
    c.actual = actual ? *actual : Json(nullptr);
    try {
      c.passed = actual && evaluate(*actual, c.op, c.expected, ex.value("tol", 0.0));
    } catch (const InvalidArgument& e) {
      c.passed = false;
      out.error = e.what();
    }
    out.passed = out.passed && c.passed;
    out.checks.push_back(std::move(c));
  }
  return out;
}

inline Json to_json(const CriterionOutcome& c) {
  Json j;
  j["criterion"] = c.id;
  j["title"] = c.title;
  j["file"] = c.file;
  j["passed"] = c.passed;
  if (c.error) j["error"] = *c.error;
  j["runs"] = Json::array();
  for (const auto& r : c.runs) {
    Json jr{{"config", r.config}, {"name", r.name}, {"status", r.status}, {"passed", r.passed}};
    if (r.error) jr["error"] = *r.error;
    jr["checks"] = Json::array();
    for (const auto& ch : r.checks) {
      jr["checks"].push_back({{"path", ch.path},
                              {"op", ch.op},
                              {"expected", ch.expected},
                              {"actual", ch.actual},
                              {"passed", ch.passed}});
    }
    j["runs"].push_back(jr);
  }
  return j;
}

}  // namespace detail

inline std::filesystem::path suite_directory(const std::string& suite, const SuiteOptions& opt) {
  if (opt.suite_dir) return *opt.suite_dir;
  return std::filesystem::path(kDefaultConfigDir) / suite;
}

/**
 * Runs every *.json criterion file of the suite (sorted by file name) and
 * writes <output_root>/<suite>/suite_report.json.
 */
inline SuiteReport run_suite(const std::string& suite, const SuiteOptions& opt = {}) {
  const std::filesystem::path dir = suite_directory(suite, opt);
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument("suite directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("suite directory '" + dir.string() + "' has no criterion files");

  SuiteReport rep;
  rep.suite = suite;
  rep.output_dir = (std::filesystem::path(opt.output_root) / suite).string();
  std::vector<detail::Task> tasks;
  for (const auto& f : files) {
    CriterionOutcome c;
    c.file = f.filename().string();
    c.id = f.stem().string();
    try {
      const Json doc = Json::parse(read_text(f.string()));
      c.id = doc.value("criterion", c.id);
      c.title = doc.value("title", "");
      const Json runs = doc.value("runs", Json::array());
      if (runs.empty()) throw InvalidArgument("criterion file lists no runs");
      for (std::size_t i = 0; i < runs.size(); ++i) {
        if (!runs[i].is_object() || !runs[i].contains("config") || !runs[i]["config"].is_string()) {
          throw InvalidArgument("runs[" + std::to_string(i) + "] needs a 'config' path");
        }
        std::filesystem::path cfg = runs[i]["config"].get<std::string>();
        if (cfg.is_relative()) cfg = f.parent_path() / cfg;
        tasks.push_back({rep.criteria.size(), i, cfg, runs[i],
                         std::filesystem::path(rep.output_dir) / f.stem() / std::to_string(i)});
      }
      c.runs.resize(runs.size());
    } catch (const std::exception& e) {
      c.error = e.what();
    }
    rep.criteria.push_back(std::move(c));
  }

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned jobs = std::max(1u, std::min<unsigned>(opt.jobs ? opt.jobs : hw, static_cast<unsigned>(tasks.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      rep.criteria[tasks[i].criterion].runs[tasks[i].run] = detail::execute(tasks[i]);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < jobs; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  rep.passed = true;
  Json out{{"suite", suite}, {"directory", dir.string()}, {"passed", true}, {"criteria", Json::array()}};
  for (auto& c : rep.criteria) {
    c.passed = !c.error && !c.runs.empty() &&
               std::all_of(c.runs.begin(), c.runs.end(), [](const RunOutcome& r) { return r.passed; });
    rep.passed = rep.passed && c.passed;
    out["criteria"].push_back(detail::to_json(c));
  }
  out["passed"] = rep.passed;
  std::filesystem::create_directories(rep.output_dir);
  write_text((std::filesystem::path(rep.output_dir) / "suite_report.json").string(), out.dump(2) + "\n");
  return rep;
}

}  // namespace mirrorless::harness
