#pragma once

#include "mirrorless/core.hpp"
#include "mirrorless/geometry.hpp"
#include "mirrorless/integrators.hpp"
#include "mirrorless/objectives.hpp"
#include "mirrorless/optimizers.hpp"
#include "mirrorless/potentials.hpp"

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace mirrorless {

// ---------------------------------------------------------------------------
// Hessian-map check

struct HessianMapReport {
  bool is_hessian_map = true;
  /// max over points and (i, j, k) of |d_k H_ij - d_j H_ik| / (1 + max |H_ab(w)|)
  double max_violation = 0.0;
  /// Unnormalized |d_k H_ij - d_j H_ik| at the witness.
  double witness_violation = 0.0;
  Vector witness_point;
  /// Zero-based (i, j, k).
  std::array<Eigen::Index, 3> witness_indices{0, 0, 0};
  std::size_t points_tested = 0;
  double fd_step = 0.0;
  double tolerance = 0.0;
};

/**
 * Numerical test of the third-derivative symmetry d_k H_ij = d_j H_ik that
 * characterizes Hessian maps. Derivatives are central differences of the
 * materialized metric.
 */
inline HessianMapReport hessian_map_check(const MetricTensor& metric, const std::vector<Vector>& points,
                                          double fd_step = 1e-5, double tol = 1e-3) {
  if (!(fd_step > 0)) throw InvalidArgument("fd_step must be positive");
  if (points.empty()) throw InvalidArgument("hessian_map_check needs at least one point");
  const Eigen::Index d = metric.dim();

  HessianMapReport rep;
  rep.fd_step = fd_step;
  rep.tolerance = tol;
  rep.witness_point = points.front();
  std::vector<Matrix> dh(static_cast<std::size_t>(d));
  for (const Vector& w : points) {
    require_dim(w, d, "hessian_map_check point");
    const Matrix h = metric.materialize(w);
    const double scale = 1.0 + h.cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < d; ++k) {
      const Vector plus = w + fd_step * Vector::Unit(d, k);
      const Vector minus = w - fd_step * Vector::Unit(d, k);
      if (!metric.in_domain(plus) || !metric.in_domain(minus)) {
        throw DomainError(metric.name() + ": finite-difference stencil leaves the domain");
      }
      dh[k] = (metric.materialize(plus) - metric.materialize(minus)) / (2.0 * fd_step);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index k = 0; k < j; ++k) {
          const double raw = std::abs(dh[k](i, j) - dh[j](i, k));
          if (raw / scale > rep.max_violation) {
            rep.max_violation = raw / scale;
            rep.witness_violation = raw;
            rep.witness_point = w;
            rep.witness_indices = {i, j, k};
          }
        }
      }
    }
    ++rep.points_tested;
  }
  rep.is_hessian_map = rep.max_violation <= tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Classic MD vs potential-free MD

struct Theorem1Report {
  double max_deviation = 0.0;
  double threshold = 0.0;
  bool passed = false;
  Trajectory classic;
  Trajectory mirrorless;
};

/**
 * Runs classic MD and the ODE form of potential-free MD (geometry = hess psi)
 * from the same start and compares iterates in the sup norm. Passes when the
 * deviation is within 10 tol K.
 */
inline Theorem1Report theorem1_check(PotentialPtr psi, const Objective& obj, const Vector& w0, double eta,
                                     std::size_t iterations, double tol = 1e-10) {
  const Geometry geo = Geometry::from_potential(std::move(psi));
  RunConfig cfg;
  cfg.eta = eta;
  cfg.iterations = iterations;
  cfg.w_init = w0;
  cfg.tol = tol;

  Theorem1Report rep;
  cfg.method = Method::md_classic;
  rep.classic = run_method(cfg, geo, obj);
  cfg.method = Method::md_mirrorless;
  cfg.flow_mode = FlowMode::ode;
  rep.mirrorless = run_method(cfg, geo, obj);
  for (const Trajectory* t : {&rep.classic, &rep.mirrorless}) {
    if (!t->ok()) throw Error("theorem1_check: run failed at iteration " + std::to_string(t->failure->iteration) +
                              ": " + t->failure->message);
  }
  for (std::size_t k = 0; k < rep.classic.size(); ++k) {
    rep.max_deviation = std::max(rep.max_deviation, sup_norm(rep.classic.points[k] - rep.mirrorless.points[k]));
  }
  rep.threshold = 10.0 * tol * static_cast<double>(iterations);
  rep.passed = rep.max_deviation <= rep.threshold;
  return rep;
}

// ---------------------------------------------------------------------------
// Linear-rate bound for potential-free MD with bounded metric eigenvalues

struct RateBoundReport {
  bool passed = false;
  bool eigen_bounds_hold = true;
  std::size_t first_violation = 0;  // iterate index, meaningful when !eigen_bounds_hold
  double eta = 0.0;
  double rate = 0.0;  // lambda alpha^2 / (gamma beta^2)
  double f_star = 0.0;
  double min_margin = 0.0;
  std::vector<double> margins;
  Trajectory trajectory;
};

namespace detail {

// F* by running the gradient flow until the objective stops moving.
inline double flow_minimum(const MetricTensor& metric, const Objective& obj, const Vector& w0) {
  OdeOptions opt;
  opt.max_samples = 0;
  opt.initial_steps = 64;
  Vector w = w0;
  double f = obj.value(w);
  for (int chunk = 0; chunk < 2000; ++chunk) {
    w = integrate_flow(metric, obj, w, 1.0, 1e-12, opt).back();
    const double f_next = obj.value(w);
    if (std::abs(f - f_next) <= 1e-15 * (1.0 + std::abs(f_next))) return f_next;
    f = f_next;
  }
  return f;
}

}  // namespace detail

/**
 * Runs potential-free MD with eta = alpha^2 / (gamma beta) and compares
 * F(w_k) - F* with
 * (F(w_0) - F*) exp(-lambda alpha^2 k / (gamma beta^2)).
 * alpha I <= H(w) <= beta I is verified at every visited iterate.
 */
inline RateBoundReport rate_bound_check(const MetricPtr& metric, double alpha, double beta, const Objective& obj,
                                        const Vector& w0, std::size_t iterations, double tol = 1e-10) {
  if (!(alpha > 0) || !(beta >= alpha)) throw InvalidArgument("need 0 < alpha <= beta");
  const auto lambda = obj.strong_convexity();
  const auto gamma = obj.smoothness();
  if (!lambda || !gamma) throw InvalidArgument("objective must declare strong convexity and smoothness");

  RateBoundReport rep;
  rep.eta = alpha * alpha / (*gamma * beta);
  rep.rate = *lambda * alpha * alpha / (*gamma * beta * beta);
  if (const auto opt = obj.optimum()) {
    rep.f_star = opt->value;
  } else {
    rep.f_star = detail::flow_minimum(*metric, obj, w0);
  }

  RunConfig cfg;
  cfg.method = Method::md_mirrorless;
  cfg.eta = rep.eta;
  cfg.iterations = iterations;
  cfg.w_init = w0;
  cfg.tol = tol;
  rep.trajectory = run_method(cfg, Geometry::from_metric(metric), obj);
  if (!rep.trajectory.ok()) throw Error("rate_bound_check: run failed: " + rep.trajectory.failure->message);

  const double gap0 = rep.trajectory.meta.front().objective - rep.f_star;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rep.trajectory.size(); ++k) {
    const Vector& w = rep.trajectory.points[k];
    Eigen::SelfAdjointEigenSolver<Matrix> es(metric->materialize(w), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
    if (rep.eigen_bounds_hold && (lo < alpha * (1.0 - 1e-12) || hi > beta * (1.0 + 1e-12))) {
      rep.eigen_bounds_hold = false;
      rep.first_violation = k;
    }
    const double bound = gap0 * std::exp(-rep.rate * static_cast<double>(k));
    const double margin = bound - (rep.trajectory.meta[k].objective - rep.f_star);
    rep.margins.push_back(margin);
    rep.min_margin = std::min(rep.min_margin, margin);
  }
  rep.passed = rep.min_margin >= -1e-10;
  return rep;
}

// ---------------------------------------------------------------------------
// Implicit bias: Bregman projection onto {A w = b}

/**
 * argmin_w D_psi(w, w0) subject to A w = b. Solves the KKT system
 * grad psi(w) = grad psi(w0) + A^T nu, A w = b by damped Newton on the
 * convex dual  phi(nu) = psi*(grad psi(w0) + A^T nu) - b^T nu.
 */
inline Vector bregman_projection(const Potential& psi, const Vector& w0, const Matrix& a, const Vector& b) {
  require_dim(w0, psi.dim(), "bregman_projection w0");
  if (a.cols() != psi.dim()) throw InvalidArgument("bregman_projection: A has wrong column count");
  require_dim(b, a.rows(), "bregman_projection b");
  Eigen::ColPivHouseholderQR<Matrix> qr(a.transpose());
  if (qr.rank() < a.rows()) throw InvalidArgument("bregman_projection: rows of A must be independent");

  const Vector z0 = psi.link(w0);
  const double target = 1e-10 * (1.0 + b.norm());
  auto primal = [&](const Vector& nu) { return psi.inverse_link(z0 + a.transpose() * nu); };
  auto dual_value = [&](const Vector& nu, const Vector& w) {
    const Vector z = z0 + a.transpose() * nu;
    return z.dot(w) - psi.value(w) - b.dot(nu);
  };

  Vector nu = Vector::Zero(a.rows());
  Vector w = w0;
  double phi = dual_value(nu, w);
  for (int it = 0; it < 200; ++it) {
    const Vector grad = a * w - b;
    if (grad.norm() <= target) return w;
    Eigen::LLT<Matrix> h_llt(psi.hessian(w));
    if (h_llt.info() != Eigen::Success) throw DomainError("bregman_projection: Hessian not positive definite");
    const Matrix schur = a * h_llt.solve(a.transpose());
    const Vector dir = -schur.ldlt().solve(grad);
    const double slope = grad.dot(dir);

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 60; ++h, t *= 0.5) {
      const Vector nu_trial = nu + t * dir;
      Vector w_trial;
      try {
        w_trial = primal(nu_trial);
      } catch (const DomainError&) {
        continue;
      }
      if (!w_trial.allFinite()) continue;
      const double phi_trial = dual_value(nu_trial, w_trial);
      if (std::isfinite(phi_trial) && phi_trial <= phi + 1e-4 * t * slope + 1e-14 * (1.0 + std::abs(phi))) {
        nu = nu_trial;
        w = std::move(w_trial);
        phi = phi_trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw ConvergenceError("bregman_projection: line search failed (infeasible or ill-posed)");
  }
  if ((a * w - b).norm() <= target) return w;
  throw ConvergenceError("bregman_projection: Newton did not converge in 200 iterations");
}

/**
 * Size of the part of grad psi(w_final) - grad psi(w0) outside the row space
 * of A, relative to 1 + its norm. Zero exactly at Bregman projections of w0.
 */
inline double kkt_residual(const Potential& psi, const Vector& w0, const Vector& w_final, const Matrix& a) {
  const Vector r = psi.link(w_final) - psi.link(w0);
  if (a.cols() != r.size()) throw InvalidArgument("kkt_residual: A has wrong column count");
  const Vector nu = a.transpose().colPivHouseholderQr().solve(r);
  return (r - a.transpose() * nu).norm() / (1.0 + r.norm());
}

struct FlowToTarget {
  Vector point;
  double time = 0.0;
  double objective = 0.0;
  bool reached = false;
};

/// Integrates the gradient flow in chunks until F <= target or max_time.
inline FlowToTarget flow_until(const MetricTensor& metric, const Objective& obj, const Vector& w0, double target,
                               double chunk = 1.0, double max_time = 1e5, double tol = 1e-12) {
  OdeOptions opt;
  opt.max_samples = 0;
  opt.initial_steps = 64;
  FlowToTarget out{w0, 0.0, obj.value(w0), false};
  while (out.time < max_time) {
    if (out.objective <= target) {
      out.reached = true;
      return out;
    }
    out.point = integrate_flow(metric, obj, out.point, chunk, tol, opt).back();
    out.time += chunk;
    out.objective = obj.value(out.point);
  }
  out.reached = out.objective <= target;
  return out;
}

// ---------------------------------------------------------------------------
// Charts and reparametrization

/// An invertible smooth change of coordinates w~ = g(w) on R^d.
class ChartMap {
 public:
  explicit ChartMap(Eigen::Index dim) : dim_(dim) {}
  virtual ~ChartMap() = default;

  Eigen::Index dim() const { return dim_; }
  virtual std::string name() const = 0;
  virtual bool is_affine() const = 0;
  virtual Vector forward(const Vector& w) const = 0;
  virtual Vector inverse(const Vector& wt) const = 0;
  /// d g / d w at w.
  virtual Matrix jacobian(const Vector& w) const = 0;

 private:
  Eigen::Index dim_;
};

using ChartPtr = std::shared_ptr<const ChartMap>;

class IdentityChart final : public ChartMap {
 public:
  using ChartMap::ChartMap;
  std::string name() const override { return "identity"; }
  bool is_affine() const override { return true; }
  Vector forward(const Vector& w) const override { return w; }
  Vector inverse(const Vector& wt) const override { return wt; }
  Matrix jacobian(const Vector&) const override { return Matrix::Identity(dim(), dim()); }
};

/// w~ = S w + shift.
class AffineChart final : public ChartMap {
 public:
  AffineChart(Matrix s, Vector shift) : ChartMap(s.rows()), s_(std::move(s)), shift_(std::move(shift)), lu_(s_) {
    if (s_.rows() != s_.cols()) throw InvalidArgument("affine chart: S must be square");
    require_dim(shift_, s_.rows(), "affine chart shift");
    if (!lu_.isInvertible()) throw InvalidArgument("affine chart: S is singular");
  }
  std::string name() const override { return "affine"; }
  bool is_affine() const override { return true; }
  Vector forward(const Vector& w) const override { return s_ * w + shift_; }
  Vector inverse(const Vector& wt) const override { return lu_.solve(wt - shift_); }
  Matrix jacobian(const Vector&) const override { return s_; }

 private:
  Matrix s_;
  Vector shift_;
  Eigen::FullPivLU<Matrix> lu_;
};

/// w~_i = w_i + w_i^3.
class CubicChart final : public ChartMap {
 public:
  using ChartMap::ChartMap;
  std::string name() const override { return "cubic"; }
  bool is_affine() const override { return false; }
  Vector forward(const Vector& w) const override { return (w.array() + w.array().cube()).matrix(); }
  Vector inverse(const Vector& wt) const override {
    Vector w(wt.size());
    for (Eigen::Index i = 0; i < wt.size(); ++i) w(i) = solve_cubic(wt(i));
    return w;
  }
  Matrix jacobian(const Vector& w) const override {
    return Vector((1.0 + 3.0 * w.array().square()).matrix()).asDiagonal();
  }

 private:
  // Real root of x^3 + x = y (Cardano, then Newton polish).
  static double solve_cubic(double y) {
    const double s = std::sqrt(0.25 * y * y + 1.0 / 27.0);
    double x = std::cbrt(0.5 * y + s) + std::cbrt(0.5 * y - s);
    for (int it = 0; it < 3; ++it) x -= (x * x * x + x - y) / (3.0 * x * x + 1.0);
    return x;
  }
};

inline ChartPtr make_chart(const std::string& name, const Params& params) {
  if (name == "identity") return std::make_shared<IdentityChart>(params.count("dim"));
  if (name == "cubic") return std::make_shared<CubicChart>(params.count("dim"));
  if (name == "affine") {
    const Matrix& s = params.matrix("S");
    Vector shift = params.has("shift") ? params.vector("shift") : Vector::Zero(s.rows());
    return std::make_shared<AffineChart>(s, std::move(shift));
  }
  throw InvalidArgument("unknown chart '" + name + "'");
}

/**
 * The metric expressed in the chart w~ = g(w):
 *   H~(w~) = J^{-T} H(g^{-1}(w~)) J^{-1},  J = dg(g^{-1}(w~)).
 */
class PullbackMetric final : public MetricTensor {
 public:
  PullbackMetric(MetricPtr base, ChartPtr chart)
      : MetricTensor(base->dim()), base_(std::move(base)), chart_(std::move(chart)) {
    if (chart_->dim() != base_->dim()) throw InvalidArgument("pullback: chart and metric dimensions differ");
  }
  std::string name() const override { return "pullback(" + base_->name() + "," + chart_->name() + ")"; }

 protected:
  bool do_in_domain(const Eigen::Ref<const Vector>& wt) const override {
    const Vector w = chart_->inverse(wt);
    return base_->in_domain(w);
  }
  Matrix do_materialize(const Eigen::Ref<const Vector>& wt) const override {
    const Vector w = chart_->inverse(wt);
    const Eigen::FullPivLU<Matrix> lu(chart_->jacobian(w));
    if (!lu.isInvertible()) throw DomainError("pullback: singular chart Jacobian");
    const Matrix j_inv = lu.inverse();
    const Matrix h = j_inv.transpose() * base_->materialize(w) * j_inv;
    return 0.5 * (h + h.transpose());
  }
  Vector do_solve(const Eigen::Ref<const Vector>& wt, const Eigen::Ref<const Vector>& v) const override {
    const Vector w = chart_->inverse(wt);
    const Matrix j = chart_->jacobian(w);
    return j * base_->solve(w, j.transpose() * v);
  }

 private:
  MetricPtr base_;
  ChartPtr chart_;
};

inline MetricPtr pullback_metric(MetricPtr metric, ChartPtr chart) {
  return std::make_shared<PullbackMetric>(std::move(metric), std::move(chart));
}

/// F~(w~) = F(g^{-1}(w~)).
class ChartObjective final : public Objective {
 public:
  ChartObjective(ObjectivePtr base, ChartPtr chart)
      : Objective(base->dim()), base_(std::move(base)), chart_(std::move(chart)) {}
  std::string name() const override { return base_->name() + "@" + chart_->name(); }

 protected:
  double do_value(const Eigen::Ref<const Vector>& wt) const override { return base_->value(chart_->inverse(wt)); }
  Vector do_gradient(const Eigen::Ref<const Vector>& wt) const override {
    const Vector w = chart_->inverse(wt);
    return chart_->jacobian(w).transpose().partialPivLu().solve(base_->gradient(w));
  }

 private:
  ObjectivePtr base_;
  ChartPtr chart_;
};

struct ChartTransportReport {
  Method method = Method::md_mirrorless;
  std::vector<double> deltas;  // |g(w_k) - w~_k|
  double max_delta = 0.0;
  bool affine = false;
};

/**
 * Runs `method` in the original chart and in the chart w~ = g(w) (pulled-back
 * metric, F~, g(w0)) and reports the per-iterate gap between g(w_k) and w~_k.
 */
inline ChartTransportReport chart_transport_check(Method method, MetricPtr metric, ChartPtr chart, ObjectivePtr obj,
                                                  const Vector& w0, double eta, std::size_t iterations,
                                                  double tol = 1e-10) {
  if (method == Method::md_classic) throw InvalidArgument("chart_transport_check: classic MD has no pullback");
  RunConfig cfg;
  cfg.method = method;
  cfg.eta = eta;
  cfg.iterations = iterations;
  cfg.tol = tol;

  cfg.w_init = w0;
  const Trajectory original = run_method(cfg, Geometry::from_metric(metric), *obj);
  cfg.w_init = chart->forward(w0);
  const ChartObjective moved_obj(obj, chart);
  Trajectory moved = run_method(cfg, Geometry::from_metric(pullback_metric(metric, chart)), moved_obj);
  moved.chart = chart->name();
  for (const Trajectory* t : std::array<const Trajectory*, 2>{&original, &moved}) {
    if (!t->ok()) throw Error("chart_transport_check: run failed: " + t->failure->message);
  }

  ChartTransportReport rep;
  rep.method = method;
  rep.affine = chart->is_affine();
  for (std::size_t k = 0; k < original.size(); ++k) {
    const double delta = (chart->forward(original.points[k]) - moved.points[k]).norm();
    rep.deltas.push_back(delta);
    rep.max_delta = std::max(rep.max_delta, delta);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Discretization error against the reference flow

struct SweepRow {
  double eta = 0.0;
  Method method = Method::ngd;
  double endpoint_error = 0.0;
};

/// For each eta and method in {ngd, md_mirrorless}: |w_K - w_flow(T)| with K = T / eta.
inline std::vector<SweepRow> discretization_error_sweep(MetricPtr metric, const Objective& obj, const Vector& w0,
                                                        double horizon, const std::vector<double>& etas,
                                                        double ref_tol = 1e-12) {
  OdeOptions opt;
  opt.max_samples = 0;
  const Vector reference = integrate_flow(*metric, obj, w0, horizon, ref_tol, opt).back();
  const Geometry geo = Geometry::from_metric(metric);

  std::vector<SweepRow> rows;
  for (double eta : etas) {
    const double steps = horizon / eta;
    const double k_round = std::round(steps);
    if (!(eta > 0) || k_round < 1 || std::abs(steps - k_round) > 1e-9 * steps) {
      throw InvalidArgument("sweep: horizon must be an integer multiple of every eta");
    }
    for (Method m : {Method::ngd, Method::md_mirrorless}) {
      RunConfig cfg;
      cfg.method = m;
      cfg.eta = eta;
      cfg.iterations = static_cast<std::size_t>(k_round);
      cfg.w_init = w0;
      cfg.tol = ref_tol;
      const Trajectory traj = run_method(cfg, geo, obj);
      if (!traj.ok()) throw Error("sweep: run failed: " + traj.failure->message);
      rows.push_back({eta, m, (traj.back() - reference).norm()});
    }
  }
  return rows;
}

/// error(eta_i) / error(eta_{i+1}) for one method, in sweep order.
inline std::vector<double> halving_ratios(const std::vector<SweepRow>& rows, Method method) {
  std::vector<double> errs;
  for (const SweepRow& r : rows)
    if (r.method == method) errs.push_back(r.endpoint_error);
  std::vector<double> ratios;
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) ratios.push_back(errs[i] / errs[i + 1]);
  return ratios;
}

}  // namespace mirrorless
