#pragma once

// Experiment configs: JSON documents validated in two passes (structure, then
// semantics) with every violation collected before anything runs.

#include "mirrorless/analysis.hpp"
#include "mirrorless/geometry.hpp"
#include "mirrorless/harness/format.hpp"
#include "mirrorless/objectives.hpp"
#include "mirrorless/optimizers.hpp"
#include "mirrorless/params.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace mirrorless::harness {

class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : InvalidArgument(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid config";
    for (const auto& s : v) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

struct AnalysisSpec {
  std::string op;
  std::string id;  // key in summary.json; defaults to op
  Json params;
};

struct ExperimentConfig {
  std::string name;
  std::string description;
  std::uint64_t seed = 0;
  std::string geometry_kind;
  Geometry geometry;
  std::string objective_name;
  ObjectivePtr objective;
  RunConfig run;
  std::vector<AnalysisSpec> analyses;
  std::optional<std::string> output;
  Json source;  // the validated document, with overrides applied
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
};

inline const std::vector<std::string>& analysis_names() {
  static const std::vector<std::string> names{"hessian_map_check",   "theorem1_check",
                                              "rate_bound_check",    "implicit_bias",
                                              "chart_transport_check", "discretization_error_sweep",
                                              "minibatch_identity"};
  return names;
}

namespace detail {

inline bool contains(const std::vector<std::string>& xs, const std::string& x) {
  return std::find(xs.begin(), xs.end(), x) != xs.end();
}

inline std::string join_names(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ", ") + x;
  return out;
}

class Checker {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  bool object(const Json& j, const std::string& path, const std::set<std::string>& allowed,
              const std::set<std::string>& required) {
    if (!j.is_object()) {
      fail(path, "must be an object");
      return false;
    }
    for (const auto& [k, v] : j.items()) {
      if (!allowed.count(k)) fail(path + "." + k, "unknown key");
    }
    for (const auto& k : required) {
      if (!j.contains(k)) fail(path + "." + k, "required key missing");
    }
    return true;
  }

  void string(const Json& j, const std::string& key, const std::string& path) {
    if (j.contains(key) && (!j[key].is_string() || j[key].get<std::string>().empty())) {
      fail(path + "." + key, "must be a non-empty string");
    }
  }
  void positive(const Json& j, const std::string& key, const std::string& path) {
    if (j.contains(key) && (!j[key].is_number() || !(j[key].get<double>() > 0))) {
      fail(path + "." + key, "must be a positive number");
    }
  }
  void number(const Json& j, const std::string& key, const std::string& path) {
    if (j.contains(key) && !j[key].is_number()) fail(path + "." + key, "must be a number");
  }
  void count(const Json& j, const std::string& key, const std::string& path) {
    if (j.contains(key) && (!j[key].is_number_integer() || j[key].get<long long>() < 1)) {
      fail(path + "." + key, "must be a positive integer");
    }
  }
  void unsigned_int(const Json& j, const std::string& key, const std::string& path) {
    if (j.contains(key) && !j[key].is_number_unsigned() &&
        !(j[key].is_number_integer() && j[key].get<long long>() >= 0)) {
      fail(path + "." + key, "must be a non-negative integer");
    }
  }
  void boolean(const Json& j, const std::string& key, const std::string& path) {
    if (j.contains(key) && !j[key].is_boolean()) fail(path + "." + key, "must be true or false");
  }
  void numbers(const Json& j, const std::string& key, const std::string& path) {
    if (j.contains(key) && (!is_number_array(j[key]) || j[key].empty())) {
      fail(path + "." + key, "must be a non-empty array of numbers");
    }
  }
};

inline Params params_from_json(const Json& j) {
  Params p;
  for (const auto& [k, v] : j.items()) {
    if (v.is_number()) {
      p.set(k, v.get<double>());
    } else if (v.is_string()) {
      p.set(k, v.get<std::string>());
    } else if (is_number_array(v) && !v.empty()) {
      p.set(k, vector_from_json(v));
    } else if (is_number_matrix(v)) {
      p.set(k, matrix_from_json(v));
    } else if (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), is_number_matrix)) {
      std::vector<Matrix> ms;
      for (const auto& m : v) ms.push_back(matrix_from_json(m));
      p.set(k, std::move(ms));
    } else {
      throw InvalidArgument("parameter '" + k + "' has an unsupported value type");
    }
  }
  return p;
}

inline void check_analysis(Checker& c, const Json& a, const std::string& path) {
  if (!a.is_object() || !a.contains("op") || !a["op"].is_string()) {
    c.fail(path, "must be an object with a string 'op'");
    return;
  }
  const std::string op = a["op"].get<std::string>();
  std::set<std::string> allowed{"op", "id"};
  std::set<std::string> required;
  if (op == "hessian_map_check") {
    allowed.insert({"points", "random_points", "fd_step", "tol"});
  } else if (op == "theorem1_check") {
  } else if (op == "rate_bound_check") {
    allowed.insert({"alpha", "beta"});
    required = {"alpha", "beta"};
  } else if (op == "implicit_bias") {
    allowed.insert({"target"});
  } else if (op == "chart_transport_check") {
    allowed.insert({"chart", "halving"});
    required = {"chart"};
  } else if (op == "discretization_error_sweep") {
    allowed.insert({"horizon", "etas"});
    required = {"horizon", "etas"};
  } else if (op == "minibatch_identity") {
  } else {
    c.fail(path + ".op", "unknown analysis '" + op + "' (known: " + join_names(analysis_names()) + ")");
    return;
  }
  c.object(a, path, allowed, required);
  c.string(a, "id", path);
  c.positive(a, "fd_step", path);
  c.positive(a, "tol", path);
  c.positive(a, "alpha", path);
  c.positive(a, "beta", path);
  c.positive(a, "target", path);
  c.positive(a, "horizon", path);
  c.numbers(a, "etas", path);
  c.boolean(a, "halving", path);
  if (a.contains("points") && !is_number_matrix(a["points"])) c.fail(path + ".points", "must be a list of points");
  if (a.contains("random_points") &&
      c.object(a["random_points"], path + ".random_points", {"count", "low", "high", "spd"}, {"count"})) {
    c.count(a["random_points"], "count", path + ".random_points");
    c.number(a["random_points"], "low", path + ".random_points");
    c.number(a["random_points"], "high", path + ".random_points");
    c.boolean(a["random_points"], "spd", path + ".random_points");
  }
  if (a.contains("chart") && c.object(a["chart"], path + ".chart", {"name", "params"}, {"name"})) {
    c.string(a["chart"], "name", path + ".chart");
    if (a["chart"].contains("params") && !a["chart"]["params"].is_object()) {
      c.fail(path + ".chart.params", "must be an object");
    }
  }
}

inline void check_structure(Checker& c, const Json& doc) {
  if (!c.object(doc, "$", {"name", "description", "seed", "geometry", "objective", "method", "analyses", "output"},
                {"name", "seed", "geometry", "objective", "method"})) {
    return;
  }
  c.string(doc, "name", "$");
  c.string(doc, "output", "$");
  if (doc.contains("description") && !doc["description"].is_string()) c.fail("$.description", "must be a string");
  c.unsigned_int(doc, "seed", "$");

  if (doc.contains("geometry") && c.object(doc["geometry"], "$.geometry", {"kind", "params"}, {"kind"})) {
    c.string(doc["geometry"], "kind", "$.geometry");
    if (doc["geometry"].contains("params") && !doc["geometry"]["params"].is_object()) {
      c.fail("$.geometry.params", "must be an object");
    }
  }

  if (doc.contains("objective") &&
      c.object(doc["objective"], "$.objective", {"name", "params", "csv", "random"}, {"name"})) {
    const Json& o = doc["objective"];
    c.string(o, "name", "$.objective");
    const int sources = int(o.contains("params")) + int(o.contains("csv")) + int(o.contains("random"));
    if (sources != 1) c.fail("$.objective", "exactly one of 'params', 'csv', 'random' is required");
    if (o.contains("params") && !o["params"].is_object()) c.fail("$.objective.params", "must be an object");
    c.string(o, "csv", "$.objective");
    if (o.contains("random") &&
        c.object(o["random"], "$.objective.random", {"n", "d", "m", "positive", "smoothness", "b_scale"}, {})) {
      for (const char* k : {"n", "d", "m"}) c.count(o["random"], k, "$.objective.random");
      c.boolean(o["random"], "positive", "$.objective.random");
      c.positive(o["random"], "smoothness", "$.objective.random");
      c.number(o["random"], "b_scale", "$.objective.random");
    }
  }

  if (doc.contains("method") &&
      c.object(doc["method"], "$.method",
               {"method", "eta", "iterations", "w_init", "tol", "flow_mode", "stochastic"},
               {"method", "eta", "iterations", "w_init"})) {
    const Json& m = doc["method"];
    if (m.contains("method")) {
      if (!m["method"].is_string()) {
        c.fail("$.method.method", "must be a string");
      } else {
        try {
          method_from_string(m["method"].get<std::string>());
        } catch (const InvalidArgument& e) {
          c.fail("$.method.method", e.what());
        }
      }
    }
    c.positive(m, "eta", "$.method");
    c.count(m, "iterations", "$.method");
    c.numbers(m, "w_init", "$.method");
    c.positive(m, "tol", "$.method");
    if (m.contains("flow_mode") &&
        (!m["flow_mode"].is_string() || (m["flow_mode"] != "automatic" && m["flow_mode"] != "ode"))) {
      c.fail("$.method.flow_mode", "must be 'automatic' or 'ode'");
    }
    if (m.contains("stochastic") &&
        c.object(m["stochastic"], "$.method.stochastic", {"nu", "seed", "sampling"}, {"nu"})) {
      c.positive(m["stochastic"], "nu", "$.method.stochastic");
      c.unsigned_int(m["stochastic"], "seed", "$.method.stochastic");
      const Json& s = m["stochastic"];
      if (s.contains("sampling") &&
          (!s["sampling"].is_string() || (s["sampling"] != "iid" && s["sampling"] != "full_pool"))) {
        c.fail("$.method.stochastic.sampling", "must be 'iid' or 'full_pool'");
      }
    }
  }

  if (doc.contains("analyses")) {
    if (!doc["analyses"].is_array()) {
      c.fail("$.analyses", "must be an array");
    } else {
      for (std::size_t i = 0; i < doc["analyses"].size(); ++i) {
        check_analysis(c, doc["analyses"][i], "$.analyses[" + std::to_string(i) + "]");
      }
    }
  }
}

inline Matrix random_gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

/// Seeded synthetic instances for the builtin objectives.
inline Params random_objective_params(const std::string& name, const Json& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const bool positive = spec.value("positive", false);
  const double b_scale = spec.value("b_scale", 1.0);
  auto need = [&](const char* key) -> Eigen::Index {
    if (!spec.contains(key)) throw InvalidArgument(std::string("random ") + name + " needs '" + key + "'");
    return spec[key].get<Eigen::Index>();
  };
  Params p;
  if (name == "quadratic") {
    const Eigen::Index d = need("d");
    const Matrix b = random_gaussian(rng, d, d);
    Matrix q = b * b.transpose() / static_cast<double>(d) + 0.5 * Matrix::Identity(d, d);
    if (spec.contains("smoothness")) q *= spec["smoothness"].get<double>() / max_eigenvalue(q);
    Vector lin = b_scale * random_gaussian(rng, d, 1).col(0);
    if (positive) lin = lin.cwiseAbs();
    p.set("Q", Matrix(0.5 * (q + q.transpose()))).set("b", lin);
  } else if (name == "least_squares" || name == "least_squares_stochastic") {
    const Eigen::Index n = need("n");
    const Eigen::Index d = need("d");
    Matrix a = random_gaussian(rng, n, d);
    Vector b = b_scale * random_gaussian(rng, n, 1).col(0);
    if (positive) {
      a = a.cwiseAbs();
      b = b.cwiseAbs();
    }
    if (spec.contains("smoothness")) {
      // F = |Aw - b|^2 has smoothness 2 lambda_max(A^T A).
      a *= std::sqrt(spec["smoothness"].get<double>() / (2.0 * max_eigenvalue(a.transpose() * a)));
    }
    p.set("A", a).set("b", b);
  } else if (name == "matrix_sensing") {
    const Eigen::Index m = need("m");
    const Eigen::Index side = need("n");
    std::vector<Matrix> sensing;
    for (Eigen::Index i = 0; i < m; ++i) sensing.push_back(random_gaussian(rng, side, side));
    const Matrix g = random_gaussian(rng, side, side);
    const Matrix truth = g * g.transpose() / static_cast<double>(side) + 0.5 * Matrix::Identity(side, side);
    Vector y(m);
    for (Eigen::Index i = 0; i < m; ++i) y(i) = (sensing[static_cast<std::size_t>(i)].array() * truth.array()).sum();
    p.set("sensing", sensing).set("y", y);
  } else {
    throw InvalidArgument("no random generator for objective '" + name + "'");
  }
  return p;
}

/// CSV layout: every row is [data | target], i.e. [A | b] or [Q | b].
inline Params csv_objective_params(const std::string& name, const std::string& path) {
  const Matrix m = read_csv_matrix(path);
  if (m.cols() < 2) throw InvalidArgument("objective CSV needs at least two columns");
  const Matrix data = m.leftCols(m.cols() - 1);
  const Vector target = m.col(m.cols() - 1);
  Params p;
  if (name == "quadratic") {
    p.set("Q", data).set("b", target);
  } else if (name == "least_squares" || name == "least_squares_stochastic") {
    p.set("A", data).set("b", target);
  } else {
    throw InvalidArgument("objective '" + name + "' cannot be loaded from CSV");
  }
  return p;
}

}  // namespace detail

/**
 * Validates and builds an experiment. Relative CSV paths resolve against
 * base_dir. Throws ConfigError listing every violation found.
 */
inline ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".",
                                     const ConfigOverrides& overrides = {}) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError({std::string("$: malformed JSON: ") + e.what()});
  }
  if (overrides.seed) doc["seed"] = *overrides.seed;
  if (overrides.tol && doc.is_object() && doc.contains("method") && doc["method"].is_object()) {
    doc["method"]["tol"] = *overrides.tol;
  }

  detail::Checker c;
  detail::check_structure(c, doc);
  if (!c.errors.empty()) throw ConfigError(c.errors);

  ExperimentConfig cfg;
  cfg.source = doc;
  cfg.name = doc["name"].get<std::string>();
  cfg.description = doc.value("description", "");
  cfg.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("output")) cfg.output = doc["output"].get<std::string>();

  const Json& m = doc["method"];
  cfg.run.method = method_from_string(m["method"].get<std::string>());
  cfg.run.eta = m["eta"].get<double>();
  cfg.run.iterations = m["iterations"].get<std::size_t>();
  cfg.run.w_init = vector_from_json(m["w_init"]);
  cfg.run.tol = m.value("tol", 1e-10);
  cfg.run.flow_mode = m.value("flow_mode", "automatic") == "ode" ? FlowMode::ode : FlowMode::automatic;
  if (m.contains("stochastic")) {
    const Json& s = m["stochastic"];
    cfg.run.stochastic = StochasticBlock{s["nu"].get<double>(), s.value("seed", cfg.seed),
                                         s.value("sampling", "iid") == "full_pool" ? SampleMode::full_pool
                                                                                   : SampleMode::iid};
  }
  const auto dim = cfg.run.w_init.size();

  // Geometry.
  cfg.geometry_kind = doc["geometry"]["kind"].get<std::string>();
  try {
    Params gp = detail::params_from_json(doc["geometry"].value("params", Json::object()));
    if (!gp.has("dim")) gp.set("dim", static_cast<double>(dim));
    if (detail::contains(builtin_metric_names(), cfg.geometry_kind)) {
      cfg.geometry = Geometry::from_metric(make_builtin_metric(cfg.geometry_kind, gp));
    } else if (detail::contains(builtin_potential_names(), cfg.geometry_kind)) {
      cfg.geometry = Geometry::from_potential(make_builtin_potential(cfg.geometry_kind, gp));
    } else {
      c.fail("$.geometry.kind", "unknown geometry '" + cfg.geometry_kind + "' (metrics: " +
                                    detail::join_names(builtin_metric_names()) +
                                    "; potentials: " + detail::join_names(builtin_potential_names()) + ")");
    }
  } catch (const InvalidArgument& e) {
    c.fail("$.geometry", e.what());
  }

  // Objective.
  const Json& o = doc["objective"];
  cfg.objective_name = o["name"].get<std::string>();
  if (!detail::contains(builtin_objective_names(), cfg.objective_name)) {
    c.fail("$.objective.name", "unknown objective '" + cfg.objective_name +
                                   "' (known: " + detail::join_names(builtin_objective_names()) + ")");
  } else {
    try {
      Params op;
      if (o.contains("params")) {
        op = detail::params_from_json(o["params"]);
      } else if (o.contains("csv")) {
        std::filesystem::path p(o["csv"].get<std::string>());
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        op = detail::csv_objective_params(cfg.objective_name, p.string());
      } else {
        op = detail::random_objective_params(cfg.objective_name, o["random"], cfg.seed);
      }
      cfg.objective = make_builtin_objective(cfg.objective_name, op);
    } catch (const InvalidArgument& e) {
      c.fail("$.objective", e.what());
    }
  }

  // Cross-field rules.
  if (cfg.geometry.metric && cfg.geometry.dim() != dim) {
    c.fail("$.method.w_init", "dimension " + std::to_string(dim) + " does not match the geometry dimension " +
                                  std::to_string(cfg.geometry.dim()));
  }
  if (cfg.objective && cfg.objective->dim() != dim) {
    c.fail("$.objective", "dimension " + std::to_string(cfg.objective->dim()) + " does not match w_init dimension " +
                              std::to_string(dim));
  }
  if (cfg.geometry.metric && cfg.run.method == Method::md_classic && !cfg.geometry.potential) {
    c.fail("$.method.method", "classic MD requires a potential");
  }
  if (cfg.run.stochastic) {
    try {
      scale_ratio(cfg.run.eta, cfg.run.stochastic->nu);
    } catch (const InvalidArgument& e) {
      c.fail("$.method.stochastic.nu", std::string("non-integer ratio: ") + e.what());
    }
    if (cfg.geometry.metric && !cfg.geometry.potential) {
      c.fail("$.method.stochastic", "two-scale stochastic MD requires a potential geometry");
    }
    if (cfg.objective && !std::dynamic_pointer_cast<const StochasticObjective>(cfg.objective)) {
      c.fail("$.method.stochastic", "objective '" + cfg.objective_name + "' has no per-sample gradients");
    }
  }
  if (cfg.geometry.metric && cfg.geometry.dim() == dim && !cfg.geometry.metric->in_domain(cfg.run.w_init)) {
    c.fail("$.method.w_init", "outside the domain of " + cfg.geometry.metric->name());
  }

  // Analyses.
  std::set<std::string> ids;
  const Json analyses = doc.value("analyses", Json::array());
  for (std::size_t i = 0; i < analyses.size(); ++i) {
    const std::string path = "$.analyses[" + std::to_string(i) + "]";
    AnalysisSpec a{analyses[i]["op"].get<std::string>(), analyses[i].value("id", analyses[i]["op"].get<std::string>()),
                   analyses[i]};
    if (!ids.insert(a.id).second) c.fail(path + ".id", "duplicate analysis id '" + a.id + "'");
    const bool needs_potential = a.op == "theorem1_check" || a.op == "implicit_bias" || a.op == "minibatch_identity";
    if (needs_potential && cfg.geometry.metric && !cfg.geometry.potential) {
      c.fail(path, a.op + " requires a potential geometry");
    }
    if (a.op == "implicit_bias" && cfg.objective_name.rfind("least_squares", 0) != 0) {
      c.fail(path, "implicit_bias requires a least_squares objective");
    }
    if (a.op == "minibatch_identity" && !cfg.run.stochastic) c.fail(path, "minibatch_identity needs a stochastic block");
    if (a.op == "chart_transport_check") {
      if (cfg.run.method == Method::md_classic) c.fail(path, "chart transport is defined for ngd, md_mirrorless, flow_reference");
      try {
        Params cp = detail::params_from_json(a.params["chart"].value("params", Json::object()));
        if (!cp.has("dim")) cp.set("dim", static_cast<double>(dim));
        make_chart(a.params["chart"]["name"].get<std::string>(), cp);
      } catch (const InvalidArgument& e) {
        c.fail(path + ".chart", e.what());
      }
    }
    if (a.op == "discretization_error_sweep") {
      const double horizon = a.params["horizon"].get<double>();
      for (const auto& e : a.params["etas"]) {
        const double eta = e.get<double>();
        const double k = horizon / eta;
        if (!(eta > 0) || std::round(k) < 1 || std::abs(k - std::round(k)) > 1e-9 * k) {
          c.fail(path + ".etas", "horizon must be an integer multiple of every eta");
          break;
        }
      }
    }
    cfg.analyses.push_back(std::move(a));
  }

  if (!c.errors.empty()) throw ConfigError(c.errors);
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path, const ConfigOverrides& overrides = {}) {
  const std::filesystem::path p(path);
  return parse_config(read_text(path), p.has_parent_path() ? p.parent_path().string() : ".", overrides);
}

}  // namespace mirrorless::harness
