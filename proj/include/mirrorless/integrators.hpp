#pragma once

#include "mirrorless/core.hpp"
#include "mirrorless/metric.hpp"
#include "mirrorless/objectives.hpp"
#include "mirrorless/potentials.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mirrorless {

/// Per-sample diagnostics attached to a trajectory point.
struct StepMeta {
  double objective = 0.0;
  double grad_norm = 0.0;
  long substeps = 0;
  double refinement_error = 0.0;
};

/// Where and why a run stopped early.
struct Failure {
  std::size_t iteration = 0;
  std::string message;
  double exit_time = std::numeric_limits<double>::quiet_NaN();
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> points;
  std::vector<StepMeta> meta;
  std::string chart = "canonical";
  std::optional<Failure> failure;

  std::size_t size() const { return points.size(); }
  bool ok() const { return !failure.has_value(); }
  const Vector& back() const { return points.back(); }
};

namespace detail {

struct OdeRun {
  std::vector<Vector> samples;  // every `stride` steps, including both ends
  Vector end;
  bool ok = true;
  double exit_time = 0.0;
};

/// Fixed-step classical RK4 with n steps over [0, horizon].
template <class Field, class Domain>
OdeRun rk4_fixed(const Field& field, const Domain& in_domain, const Vector& y0, double horizon, long n,
                 long stride) {
  OdeRun run;
  const double h = horizon / static_cast<double>(n);
  Vector y = y0;
  if (stride > 0) run.samples.push_back(y);

  auto eval = [&](const Vector& at, double t, Vector& out) {
    if (!at.allFinite() || !in_domain(at)) {
      run.ok = false;
      run.exit_time = t;
      return false;
    }
    try {
      out = field(at);
    } catch (const DomainError&) {
      // A metric that cannot be solved at `at` counts as leaving the domain.
      out.resize(0);
    }
    if (out.size() == 0 || !out.allFinite()) {
      run.ok = false;
      run.exit_time = t;
      return false;
    }
    return true;
  };

  Vector k1, k2, k3, k4;
  for (long i = 0; i < n; ++i) {
    const double t = h * static_cast<double>(i);
    if (!eval(y, t, k1)) return run;
    if (!eval(y + 0.5 * h * k1, t + 0.5 * h, k2)) return run;
    if (!eval(y + 0.5 * h * k2, t + 0.5 * h, k3)) return run;
    if (!eval(y + h * k3, t + h, k4)) return run;
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (stride > 0 && (i + 1) % stride == 0) run.samples.push_back(y);
  }
  if (!y.allFinite() || !in_domain(y)) {
    run.ok = false;
    run.exit_time = horizon;
    return run;
  }
  run.end = y;
  return run;
}

}  // namespace detail

struct OdeOptions {
  /// Substeps at the coarsest level; refinement multiplies this by powers of two.
  long initial_steps = 1;
  int max_doublings = 20;
  /// Upper bound on stored samples (0 stores only the endpoints).
  long max_samples = 1L << 14;
  /// A domain exit that persists over this many consecutive levels is reported.
  int domain_exit_levels = 4;
};

struct OdeSolution {
  std::vector<Vector> samples;
  long samples_stride = 0;  // in finest-grid steps
  long steps = 0;
  double error_estimate = 0.0;
};

/**
 * Integrates y' = field(y) over [0, horizon] with RK4, doubling the number of
 * steps until successive endpoints agree to `tol` in the sup norm.
 */
template <class Field, class Domain>
OdeSolution integrate_refined(const Field& field, const Domain& in_domain, const Vector& y0, double horizon,
                              double tol, const OdeOptions& opt = {}) {
  if (!(horizon > 0)) throw InvalidArgument("integration horizon must be positive");
  if (!(tol > 0)) throw InvalidArgument("integration tolerance must be positive");
  if (opt.initial_steps < 1) throw InvalidArgument("initial_steps must be positive");
  if (!in_domain(y0)) throw DomainError("initial point outside domain", 0.0);

  long n = opt.initial_steps;
  detail::OdeRun prev = detail::rk4_fixed(field, in_domain, y0, horizon, n, 0);
  int exits = prev.ok ? 0 : 1;
  for (int level = 1; level <= opt.max_doublings; ++level) {
    n *= 2;
    detail::OdeRun cur = detail::rk4_fixed(field, in_domain, y0, horizon, n, 0);
    if (!cur.ok) {
      if (++exits >= opt.domain_exit_levels) {
        throw DomainError("path left the domain at t=" + std::to_string(cur.exit_time), cur.exit_time);
      }
      prev = std::move(cur);
      continue;
    }
    exits = 0;
    if (prev.ok) {
      const double diff = sup_norm(cur.end - prev.end);
      if (diff <= tol) {
        OdeSolution sol;
        sol.steps = n;
        sol.error_estimate = diff;
        if (opt.max_samples > 0) {
          long samples = opt.initial_steps;
          while (samples * 2 <= opt.max_samples && samples * 2 <= n) samples *= 2;
          sol.samples_stride = n / samples;
          sol.samples = detail::rk4_fixed(field, in_domain, y0, horizon, n, sol.samples_stride).samples;
        } else {
          sol.samples_stride = n;
          sol.samples = {y0, cur.end};
        }
        return sol;
      }
    }
    prev = std::move(cur);
  }
  throw ConvergenceError("step-doubling refinement did not converge within " + std::to_string(opt.max_doublings) +
                         " doublings");
}

/**
 * Riemannian gradient flow w' = -H(w)^{-1} grad F(w) from w0 over [0, T].
 * Samples land on a uniform grid that contains every multiple of
 * T / opt.initial_steps.
 */
inline Trajectory integrate_flow(const MetricTensor& metric, const Objective& obj, const Eigen::Ref<const Vector>& w0,
                                 double horizon, double tol = 1e-10, OdeOptions opt = {}) {
  require_dim(w0, metric.dim(), "integrate_flow w0");
  require_dim(w0, obj.dim(), "integrate_flow w0 vs objective");
  auto field = [&](const Vector& w) -> Vector { return -metric.solve(w, obj.gradient(w)); };
  auto domain = [&](const Vector& w) { return metric.in_domain(w); };
  const OdeSolution sol = integrate_refined(field, domain, Vector(w0), horizon, tol, opt);

  Trajectory traj;
  const double dt = horizon / static_cast<double>(sol.steps);
  for (std::size_t i = 0; i < sol.samples.size(); ++i) {
    const Vector& w = sol.samples[i];
    const long step_index = static_cast<long>(i) * sol.samples_stride;
    traj.times.push_back(i + 1 == sol.samples.size() ? horizon : dt * static_cast<double>(step_index));
    traj.points.push_back(w);
    traj.meta.push_back({obj.value(w), obj.gradient(w).norm(), sol.steps, sol.error_estimate});
  }
  return traj;
}

enum class FlowMode {
  /// Closed-form dual update for Hessian metrics, ODE otherwise.
  automatic,
  /// Always integrate the ODE (verification of the closed form).
  ode,
};

struct StepResult {
  Vector point;
  long substeps = 0;
  double error_estimate = 0.0;
};

/**
 * One potential-free mirror step: follow w' = -H(w)^{-1} g with g frozen for
 * time eta. For a Hessian metric the path is linear in the dual, so
 * grad psi(w(eta)) = grad psi(w) - eta g gives the endpoint directly.
 */
inline StepResult mirrorless_step(const MetricTensor& metric, const Eigen::Ref<const Vector>& w,
                                  const Eigen::Ref<const Vector>& g, double eta, double tol = 1e-10,
                                  FlowMode mode = FlowMode::automatic) {
  require_dim(w, metric.dim(), "mirrorless_step w");
  require_dim(g, metric.dim(), "mirrorless_step g");
  if (!(eta > 0)) throw InvalidArgument("stepsize must be positive");
  if (!g.allFinite()) throw InvalidArgument("mirrorless_step: non-finite gradient");
  if (!metric.in_domain(w)) throw DomainError(metric.name() + ": step starts outside the domain", 0.0);

  if (mode == FlowMode::automatic) {
    if (const auto psi = metric.potential()) {
      return {psi->inverse_link(psi->link(w) - eta * g), 0, 0.0};
    }
  }
  const Vector frozen = g;
  auto field = [&](const Vector& x) -> Vector { return -metric.solve(x, frozen); };
  auto domain = [&](const Vector& x) { return metric.in_domain(x); };
  OdeOptions opt;
  opt.max_samples = 0;
  const OdeSolution sol = integrate_refined(field, domain, Vector(w), eta, tol, opt);
  return {sol.samples.back(), sol.steps, sol.error_estimate};
}

}  // namespace mirrorless
