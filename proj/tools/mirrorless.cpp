// mirrorless: command-line front end for experiments, checks and suites.
//
// Exit codes: 0 success, 1 run or check failed, 2 invalid input.

#include "mirrorless/harness/suite.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace mh = mirrorless::harness;

namespace {

struct Common {
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  bool quiet = false;
};

std::optional<std::string> flag(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

int report_config_error(const mh::ConfigError& e) {
  std::cerr << "error: invalid config\n";
  for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
  return 2;
}

int cmd_run(const std::string& path, const Common& c) {
  const mh::ExperimentConfig cfg = mh::parse_config_file(path, {c.seed, c.tol});
  const mh::ExperimentResult res = mh::run_experiment(cfg, mh::resolve_output_root(flag(c.output_dir)));
  if (!c.quiet) std::cout << res.summary.dump(2) << "\n";
  if (!res.ok()) {
    std::cerr << "error: " << res.error.value_or(res.status) << "\n";
    return 1;
  }
  std::cerr << "wrote " << res.output_dir << "\n";
  return 0;
}

// Analyses of one kind taken from the config, or a default one built from `fallback`.
std::vector<mh::AnalysisSpec> analyses_of(const mh::ExperimentConfig& cfg, const std::string& op, mh::Json fallback) {
  std::vector<mh::AnalysisSpec> out;
  for (const auto& a : cfg.analyses)
    if (a.op == op) out.push_back(a);
  if (out.empty()) out.push_back({op, op, std::move(fallback)});
  return out;
}

int cmd_check_hessian_map(const std::string& path, const Common& c) {
  const mh::ExperimentConfig cfg = mh::parse_config_file(path, {c.seed, c.tol});
  const std::string dir = mh::resolve_output_root(flag(c.output_dir)) + "/" + cfg.output.value_or(cfg.name);
  std::filesystem::create_directories(dir);
  mh::Json out{{"name", cfg.name}, {"metric", cfg.geometry.metric->name()}, {"checks", mh::Json::object()}};
  for (const auto& a : analyses_of(cfg, "hessian_map_check", {{"op", "hessian_map_check"}})) {
    out["checks"][a.id] = mh::detail::run_analysis(cfg, a, {}, dir);
  }
  mh::write_text(dir + "/hessian_map.json", out.dump(2) + "\n");
  if (!c.quiet) std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& path, std::optional<double> horizon, const std::vector<double>& etas,
              const Common& c) {
  mh::ExperimentConfig cfg = mh::parse_config_file(path, {c.seed, c.tol});
  auto specs = analyses_of(cfg, "discretization_error_sweep",
                           {{"op", "discretization_error_sweep"}, {"horizon", 1.0}, {"etas", {0.1, 0.05, 0.025}}});
  mh::AnalysisSpec spec = specs.front();
  spec.id = "sweep";
  if (horizon) spec.params["horizon"] = *horizon;
  if (!etas.empty()) spec.params["etas"] = etas;
  cfg.analyses = {spec};
  cfg.source["analyses"] = mh::Json::array({spec.params});
  const mh::ExperimentResult res = mh::run_experiment(cfg, mh::resolve_output_root(flag(c.output_dir)));
  if (!res.ok()) {
    std::cerr << "error: " << res.error.value_or(res.status) << "\n";
    return 1;
  }
  if (!c.quiet) std::cout << mh::read_text(res.output_dir + "/sweep.csv");
  std::cerr << "wrote " << res.output_dir << "/sweep.csv\n";
  return 0;
}

int cmd_suite(const std::string& name, const std::string& suite_dir, unsigned jobs, const Common& c) {
  mh::SuiteOptions opt;
  opt.output_root = mh::resolve_output_root(flag(c.output_dir));
  opt.suite_dir = flag(suite_dir);
  opt.jobs = jobs;
  const mh::SuiteReport rep = mh::run_suite(name, opt);
  for (const auto& cr : rep.criteria) {
    std::cout << (cr.passed ? "PASS" : "FAIL") << "  criterion " << cr.id << "  " << cr.title << "\n";
    if (cr.passed || c.quiet) continue;
    if (cr.error) std::cout << "      " << *cr.error << "\n";
    for (const auto& r : cr.runs) {
      if (r.passed) continue;
      std::cout << "      " << r.config << " [" << r.status << "]";
      if (r.error) std::cout << " " << *r.error;
      std::cout << "\n";
      for (const auto& ch : r.checks)
        if (!ch.passed)
          std::cout << "        " << ch.path << " " << ch.op << " " << ch.expected.dump() << " (actual "
                    << ch.actual.dump() << ")\n";
    }
  }
  std::cout << (rep.passed ? "suite passed" : "suite FAILED") << ": " << rep.output_dir << "/suite_report.json\n";
  return rep.passed ? 0 : 1;
}

int cmd_list() {
  auto print = [](const char* title, const std::vector<std::string>& names) {
    std::cout << title << ":";
    for (const auto& n : names) std::cout << " " << n;
    std::cout << "\n";
  };
  print("metrics", mirrorless::builtin_metric_names());
  print("potentials", mirrorless::builtin_potential_names());
  print("objectives", mirrorless::builtin_objective_names());
  print("methods", {"ngd", "md_classic", "md_mirrorless", "flow_reference"});
  print("analyses", mh::analysis_names());
  print("charts", {"identity", "affine", "cubic"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Potential-free mirror descent toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mh::kVersion);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--output-dir", common.output_dir, "Output root (default $MIRRORLESS_OUTPUT_DIR or ./runs)");
    sub->add_option("--seed", common.seed, "Override the config seed");
    sub->add_option("--tol", common.tol, "Override the integration tolerance")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", common.quiet, "Suppress stdout reports");
  };

  std::string config;
  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  add_common(run);

  auto* hm = app.add_subcommand("check-hessian-map", "Test whether a config's metric is a Hessian map");
  hm->add_option("config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  add_common(hm);

  std::optional<double> horizon;
  std::vector<double> etas;
  auto* sweep = app.add_subcommand("sweep", "Endpoint error of ngd and md_mirrorless against the flow");
  sweep->add_option("config", config, "Config JSON (geometry, objective, w_init)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--horizon", horizon, "Flow time T (default from the config, else 1)")->check(CLI::PositiveNumber);
  sweep->add_option("--etas", etas, "Step sizes dividing T, comma separated")->delimiter(',');
  add_common(sweep);

  std::string suite_name, suite_dir;
  unsigned jobs = 0;
  auto* suite = app.add_subcommand("suite", "Run a named suite of criteria");
  suite->add_option("name", suite_name, "Suite name (acceptance, quick)")->required();
  suite->add_option("--suite-dir", suite_dir, "Directory of criterion files")->check(CLI::ExistingDirectory);
  suite->add_option("--jobs", jobs, "Worker threads (default: hardware concurrency)");
  add_common(suite);

  app.add_subcommand("list-builtins", "List builtin geometries, objectives, methods and analyses");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, common);
    if (*hm) return cmd_check_hessian_map(config, common);
    if (*sweep) return cmd_sweep(config, horizon, etas, common);
    if (*suite) return cmd_suite(suite_name, suite_dir, jobs, common);
    return cmd_list();
  } catch (const mh::ConfigError& e) {
    return report_config_error(e);
  } catch (const mirrorless::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
