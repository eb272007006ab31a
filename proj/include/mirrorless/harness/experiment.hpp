#pragma once

// Runs one validated experiment: the main trajectory, its analyses, and the
// output directory (trajectory.csv, summary.json, run_meta.json, error.json).

#include "mirrorless/analysis.hpp"
#include "mirrorless/harness/config.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace mirrorless::harness {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentResult {
  std::string status;  // "ok", "failed" (trajectory stopped early) or "error"
  Trajectory trajectory;
  Json summary;
  std::string output_dir;
  std::optional<std::string> error;

  bool ok() const { return status == "ok"; }
};

/// --output-dir, else $MIRRORLESS_OUTPUT_DIR, else ./runs
inline std::string resolve_output_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("MIRRORLESS_OUTPUT_DIR"); env && *env) return env;
  return "runs";
}

namespace detail {

inline Json trajectory_summary(const Trajectory& t) {
  Json j;
  j["iterates"] = t.size();
  j["final_iterate"] = t.size() ? to_json(t.back()) : Json::array();
  j["final_objective"] = t.size() ? to_json(t.meta.back().objective) : Json(nullptr);
  return j;
}

inline Json failure_json(const Trajectory& t) {
  if (!t.failure) return nullptr;
  Json f;
  f["iteration"] = t.failure->iteration;
  f["message"] = t.failure->message;
  f["exit_time"] = to_json(t.failure->exit_time);
  return f;
}

inline std::vector<Vector> analysis_points(const ExperimentConfig& cfg, const Json& a) {
  std::vector<Vector> pts;
  if (a.contains("points")) {
    const Matrix m = matrix_from_json(a["points"]);
    for (Eigen::Index i = 0; i < m.rows(); ++i) pts.emplace_back(m.row(i).transpose());
    return pts;
  }
  if (!a.contains("random_points")) return {cfg.run.w_init};
  const Json& rp = a["random_points"];
  const auto count = rp["count"].get<std::size_t>();
  const double lo = rp.value("low", -1.0);
  const double hi = rp.value("high", 1.0);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(lo, hi);
  const Eigen::Index d = cfg.geometry.dim();
  for (std::size_t i = 0; i < count; ++i) {
    if (rp.value("spd", false)) {
      // Points are sym_vec of SPD matrices: G G^T / n + I.
      const Eigen::Index n = static_cast<Eigen::Index>(std::lround((std::sqrt(8.0 * double(d) + 1.0) - 1.0) / 2.0));
      Matrix g(n, n);
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c) g(r, c) = u(rng);
      pts.push_back(sym_vec(g * g.transpose() / double(n) + Matrix::Identity(n, n)));
    } else {
      Vector w(d);
      for (Eigen::Index k = 0; k < d; ++k) w(k) = u(rng);
      pts.push_back(w);
    }
  }
  return pts;
}

/// Classic minibatch MD written directly from the averaged-gradient update.
inline Trajectory minibatch_md(const ExperimentConfig& cfg, const Potential& psi, const StochasticObjective& sobj) {
  const StochasticBlock& sb = *cfg.run.stochastic;
  const ScaleRatio ratio = scale_ratio(cfg.run.eta, sb.nu);
  const auto b = static_cast<std::uint64_t>(ratio.per_step);
  const auto c = static_cast<std::uint64_t>(ratio.reuse);
  Trajectory t;
  Vector w = cfg.run.w_init;
  t.points.push_back(w);
  for (std::size_t k = 0; k < cfg.run.iterations; ++k) {
    Vector g = Vector::Zero(w.size());
    if (sb.sampling == SampleMode::full_pool) {
      g = sobj.gradient(w);
    } else if (c == 1) {
      for (std::uint64_t i = 0; i < b; ++i) g += sobj.sample_gradient(w, sobj.sample_index(sb.seed, k * b + i));
      g /= static_cast<double>(b);
    } else {
      g = sobj.sample_gradient(w, sobj.sample_index(sb.seed, k / c));
    }
    w = psi.inverse_link(psi.link(w) - cfg.run.eta * g);
    t.points.push_back(w);
  }
  return t;
}

inline Json run_analysis(const ExperimentConfig& cfg, const AnalysisSpec& spec, const Trajectory& main,
                         const std::string& out_dir) {
  const Json& a = spec.params;
  const RunConfig& rc = cfg.run;
  Json r;
  if (spec.op == "hessian_map_check") {
    const auto rep = hessian_map_check(*cfg.geometry.metric, analysis_points(cfg, a), a.value("fd_step", 1e-5),
                                       a.value("tol", 1e-3));
    r["is_hessian_map"] = rep.is_hessian_map;
    r["max_violation"] = to_json(rep.max_violation);
    r["witness_violation"] = to_json(rep.witness_violation);
    r["witness_point"] = to_json(rep.witness_point);
    r["witness_indices"] = Json::array({rep.witness_indices[0], rep.witness_indices[1], rep.witness_indices[2]});
    r["points_tested"] = rep.points_tested;
    r["fd_step"] = rep.fd_step;
    r["tolerance"] = rep.tolerance;
  } else if (spec.op == "theorem1_check") {
    const auto rep = theorem1_check(cfg.geometry.potential, *cfg.objective, rc.w_init, rc.eta, rc.iterations, rc.tol);
    r["passed"] = rep.passed;
    r["max_deviation"] = to_json(rep.max_deviation);
    r["threshold"] = rep.threshold;
    r["classic_final"] = to_json(rep.classic.back());
    r["mirrorless_final"] = to_json(rep.mirrorless.back());
  } else if (spec.op == "rate_bound_check") {
    const auto rep = rate_bound_check(cfg.geometry.metric, a["alpha"].get<double>(), a["beta"].get<double>(),
                                      *cfg.objective, rc.w_init, rc.iterations, rc.tol);
    r["passed"] = rep.passed;
    r["eigen_bounds_hold"] = rep.eigen_bounds_hold;
    r["first_violation"] = rep.eigen_bounds_hold ? Json(nullptr) : Json(rep.first_violation);
    r["eta"] = rep.eta;
    r["rate"] = rep.rate;
    r["f_star"] = to_json(rep.f_star);
    r["min_margin"] = to_json(rep.min_margin);
  } else if (spec.op == "implicit_bias") {
    const auto& ls = dynamic_cast<const LeastSquaresObjective&>(*cfg.objective);
    const auto flow = flow_until(*cfg.geometry.metric, ls, rc.w_init, a.value("target", 1e-12));
    const Vector proj = bregman_projection(*cfg.geometry.potential, rc.w_init, ls.a(), ls.b());
    r["reached"] = flow.reached;
    r["flow_time"] = flow.time;
    r["final_objective"] = to_json(flow.objective);
    r["rel_error"] = to_json(sup_norm(flow.point - proj) / std::max(sup_norm(proj), 1e-300));
    r["kkt_residual"] = to_json(kkt_residual(*cfg.geometry.potential, rc.w_init, flow.point, ls.a()));
    r["flow_limit"] = to_json(flow.point);
    r["projection"] = to_json(proj);
  } else if (spec.op == "chart_transport_check") {
    Params cp = params_from_json(a["chart"].value("params", Json::object()));
    if (!cp.has("dim")) cp.set("dim", static_cast<double>(rc.w_init.size()));
    const ChartPtr chart = make_chart(a["chart"]["name"].get<std::string>(), cp);
    const auto rep = chart_transport_check(rc.method, cfg.geometry.metric, chart, cfg.objective, rc.w_init, rc.eta,
                                           rc.iterations, rc.tol);
    r["chart"] = chart->name();
    r["affine"] = rep.affine;
    r["max_delta"] = to_json(rep.max_delta);
    r["deltas"] = to_json(rep.deltas);
    if (a.value("halving", false)) {
      const auto half = chart_transport_check(rc.method, cfg.geometry.metric, chart, cfg.objective, rc.w_init,
                                              rc.eta / 2, 2 * rc.iterations, rc.tol);
      r["max_delta_half"] = to_json(half.max_delta);
      r["halving_ratio"] = to_json(rep.max_delta / half.max_delta);
    }
  } else if (spec.op == "discretization_error_sweep") {
    std::vector<double> etas;
    for (const auto& e : a["etas"]) etas.push_back(e.get<double>());
    const auto rows =
        discretization_error_sweep(cfg.geometry.metric, *cfg.objective, rc.w_init, a["horizon"].get<double>(), etas);
    std::string csv = "eta,method,endpoint_error\n";
    Json jrows = Json::array();
    for (const auto& row : rows) {
      csv += format_double(row.eta) + ',' + to_string(row.method) + ',' + format_double(row.endpoint_error) + '\n';
      jrows.push_back({{"eta", row.eta}, {"method", to_string(row.method)}, {"endpoint_error", to_json(row.endpoint_error)}});
    }
    if (!out_dir.empty()) write_text((std::filesystem::path(out_dir) / (spec.id + ".csv")).string(), csv);
    r["rows"] = jrows;
    r["ratios"] = {{"ngd", to_json(halving_ratios(rows, Method::ngd))},
                   {"md_mirrorless", to_json(halving_ratios(rows, Method::md_mirrorless))}};
  } else if (spec.op == "minibatch_identity") {
    const auto& sobj = dynamic_cast<const StochasticObjective&>(*cfg.objective);
    const Trajectory ref = minibatch_md(cfg, *cfg.geometry.potential, sobj);
    if (!main.ok()) throw Error("minibatch_identity: main run failed: " + main.failure->message);
    double dev = 0.0;
    for (std::size_t k = 0; k < main.size(); ++k) dev = std::max(dev, sup_norm(main.points[k] - ref.points[k]));
    const ScaleRatio ratio = scale_ratio(rc.eta, rc.stochastic->nu);
    r["max_deviation"] = to_json(dev);
    r["batch_size"] = ratio.per_step;
    r["reuse"] = ratio.reuse;
  } else {
    throw InvalidArgument("unknown analysis '" + spec.op + "'");
  }
  return r;
}

}  // namespace detail

/// Main run only; no analyses, no files.
inline Trajectory run_trajectory(const ExperimentConfig& cfg) {
  if (cfg.run.stochastic) {
    return run_two_scale_stochastic(cfg.run, *cfg.geometry.potential,
                                    dynamic_cast<const StochasticObjective&>(*cfg.objective));
  }
  return run_method(cfg.run, cfg.geometry, *cfg.objective);
}

/**
 * Runs cfg and writes its outputs under output_root/(output or name).
 * An empty output_root skips all file output.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& output_root) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult res;
  if (!output_root.empty()) {
    res.output_dir = (std::filesystem::path(output_root) / cfg.output.value_or(cfg.name)).string();
    std::filesystem::create_directories(res.output_dir);
    std::filesystem::remove((std::filesystem::path(res.output_dir) / "error.json"));
  }

  Json& s = res.summary;
  s["name"] = cfg.name;
  s["status"] = "ok";
  s["method"] = to_string(cfg.run.method);
  s["geometry"] = cfg.geometry_kind;
  s["objective"] = cfg.objective_name;
  s["seed"] = cfg.seed;
  std::string stage = "run";
  try {
    res.trajectory = run_trajectory(cfg);
    const Json ts = detail::trajectory_summary(res.trajectory);
    for (const auto& [k, v] : ts.items()) s[k] = v;
    s["failure"] = detail::failure_json(res.trajectory);
    if (!res.trajectory.ok()) {
      s["status"] = "failed";
      res.error = "iteration " + std::to_string(res.trajectory.failure->iteration) + ": " +
                  res.trajectory.failure->message;
    }
    s["analyses"] = Json::object();
    for (const auto& a : cfg.analyses) {
      stage = "analysis " + a.id;
      s["analyses"][a.id] = detail::run_analysis(cfg, a, res.trajectory, res.output_dir);
    }
  } catch (const std::exception& e) {
    s["status"] = "error";
    res.error = stage + ": " + e.what();
  }
  res.status = s["status"].get<std::string>();
  if (res.error) s["error"] = *res.error;

  if (!res.output_dir.empty()) {
    const std::filesystem::path dir(res.output_dir);
    write_text((dir / "trajectory.csv").string(), trajectory_csv(res.trajectory));
    write_text((dir / "summary.json").string(), s.dump(2) + "\n");
    Json meta;
    meta["version"] = kVersion;
    meta["name"] = cfg.name;
    meta["seed"] = cfg.seed;
    meta["config"] = cfg.source;
    meta["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text((dir / "run_meta.json").string(), meta.dump(2) + "\n");
    if (res.error) {
      Json err{{"name", cfg.name}, {"status", res.status}, {"message", *res.error}};
      if (res.trajectory.failure) err["failure"] = s["failure"];
      write_text((dir / "error.json").string(), err.dump(2) + "\n");
    }
  }
  return res;
}

}  // namespace mirrorless::harness
