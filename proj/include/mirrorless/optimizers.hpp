#pragma once

#include "mirrorless/core.hpp"
#include "mirrorless/geometry.hpp"
#include "mirrorless/integrators.hpp"
#include "mirrorless/objectives.hpp"
#include "mirrorless/potentials.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mirrorless {

enum class Method { ngd, md_classic, md_mirrorless, flow_reference };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ngd: return "ngd";
    case Method::md_classic: return "md_classic";
    case Method::md_mirrorless: return "md_mirrorless";
    case Method::flow_reference: return "flow_reference";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "ngd") return Method::ngd;
  if (s == "md_classic") return Method::md_classic;
  if (s == "md_mirrorless") return Method::md_mirrorless;
  if (s == "flow_reference") return Method::flow_reference;
  throw InvalidArgument("unknown method '" + s + "'");
}

/// A metric, plus the potential it is the Hessian of when there is one.
struct Geometry {
  MetricPtr metric;
  PotentialPtr potential;

  static Geometry from_metric(MetricPtr m) {
    if (!m) throw InvalidArgument("geometry needs a metric");
    Geometry g;
    g.potential = m->potential();
    g.metric = std::move(m);
    return g;
  }
  static Geometry from_potential(PotentialPtr psi) {
    if (!psi) throw InvalidArgument("geometry needs a potential");
    Geometry g;
    g.metric = potential_to_metric(psi);
    g.potential = std::move(psi);
    return g;
  }

  Eigen::Index dim() const { return metric->dim(); }
};

enum class SampleMode {
  /// One pool index per nu-slot, drawn from the seeded stream.
  iid,
  /// Each nu-slot uses the full-pool average (the nu -> 0 limit for finite sums).
  full_pool,
};

struct StochasticBlock {
  double nu = 0.0;
  std::uint64_t seed = 0;
  SampleMode sampling = SampleMode::iid;
};

struct RunConfig {
  Method method = Method::md_mirrorless;
  double eta = 0.1;
  std::size_t iterations = 10;
  Vector w_init;
  double tol = 1e-10;
  FlowMode flow_mode = FlowMode::automatic;
  std::optional<StochasticBlock> stochastic;
};

/// Integer relation between the two resolutions: eta = per_step * nu, or nu = reuse * eta.
struct ScaleRatio {
  long per_step = 1;
  long reuse = 1;
};

inline ScaleRatio scale_ratio(double eta, double nu) {
  if (!(eta > 0) || !(nu > 0)) throw InvalidArgument("eta and nu must be positive");
  auto as_integer = [](double r) -> std::optional<long> {
    const double k = std::round(r);
    if (k >= 1 && std::abs(r - k) <= 1e-9 * r) return static_cast<long>(k);
    return std::nullopt;
  };
  if (eta >= nu) {
    if (auto b = as_integer(eta / nu)) return {*b, 1};
  } else if (auto c = as_integer(nu / eta)) {
    return {1, *c};
  }
  throw InvalidArgument("eta/nu is not an integer ratio (eta=" + std::to_string(eta) + ", nu=" + std::to_string(nu) +
                        ")");
}

/// Throws InvalidArgument when cfg cannot run on this geometry/objective.
inline void validate(const RunConfig& cfg, const Geometry& geo, const Objective& obj) {
  if (!geo.metric) throw InvalidArgument("geometry has no metric");
  if (!(cfg.eta > 0)) throw InvalidArgument("stepsize eta must be positive");
  if (!(cfg.tol > 0)) throw InvalidArgument("tolerance must be positive");
  if (cfg.iterations < 1) throw InvalidArgument("iterations must be at least 1");
  require_dim(cfg.w_init, geo.dim(), "w_init");
  if (obj.dim() != geo.dim()) throw InvalidArgument("objective and geometry dimensions differ");
  if (cfg.method == Method::md_classic && !geo.potential) {
    throw InvalidArgument("classic MD requires a potential");
  }
  if (cfg.stochastic) {
    scale_ratio(cfg.eta, cfg.stochastic->nu);
    if (!geo.potential) throw InvalidArgument("two-scale stochastic MD requires a potential");
  }
  if (!geo.metric->in_domain(cfg.w_init)) throw DomainError("w_init outside the geometry's domain", 0.0);
}

/// w - eta H(w)^{-1} grad F(w).
inline Vector ngd_step(const MetricTensor& metric, const Objective& obj, const Eigen::Ref<const Vector>& w,
                       double eta) {
  Vector next = w - eta * metric_solve(metric, w, obj.gradient(w));
  if (!metric.in_domain(next)) throw DomainError(metric.name() + ": NGD step left the domain");
  return next;
}

/// grad psi(w+) = grad psi(w) - eta grad F(w).
inline Vector md_step_classic(const Potential& psi, const Objective& obj, const Eigen::Ref<const Vector>& w,
                              double eta) {
  return psi.inverse_link(psi.link(w) - eta * obj.gradient(w));
}

namespace detail {

inline void push_point(Trajectory& traj, const Objective& obj, double t, const Vector& w, long substeps,
                       double err) {
  traj.times.push_back(t);
  traj.points.push_back(w);
  traj.meta.push_back({obj.value(w), obj.gradient(w).norm(), substeps, err});
}

inline Trajectory run_flow_reference(const RunConfig& cfg, const Geometry& geo, const Objective& obj) {
  Trajectory traj;
  const double horizon = cfg.eta * static_cast<double>(cfg.iterations);
  OdeOptions opt;
  opt.initial_steps = static_cast<long>(cfg.iterations);
  opt.max_samples = static_cast<long>(cfg.iterations);
  try {
    const Trajectory flow = integrate_flow(*geo.metric, obj, cfg.w_init, horizon, cfg.tol, opt);
    for (std::size_t k = 0; k < flow.size(); ++k) {
      const double t = k + 1 == flow.size() ? horizon : cfg.eta * static_cast<double>(k);
      traj.times.push_back(t);
      traj.points.push_back(flow.points[k]);
      traj.meta.push_back(flow.meta[k]);
    }
  } catch (const DomainError& e) {
    push_point(traj, obj, 0.0, cfg.w_init, 0, 0.0);
    traj.failure = Failure{0, e.what(), e.exit_time()};
  } catch (const Error& e) {
    push_point(traj, obj, 0.0, cfg.w_init, 0, 0.0);
    traj.failure = Failure{0, e.what()};
  }
  return traj;
}

}  // namespace detail

/**
 * Runs cfg.iterations steps of the chosen discretization and returns the
 * K+1 iterates w(eta k). A failing step ends the run; the iterates computed
 * so far are kept along with the failure record.
 */
inline Trajectory run_method(const RunConfig& cfg, const Geometry& geo, const Objective& obj) {
  validate(cfg, geo, obj);
  if (cfg.method == Method::flow_reference) return detail::run_flow_reference(cfg, geo, obj);

  Trajectory traj;
  Vector w = cfg.w_init;
  detail::push_point(traj, obj, 0.0, w, 0, 0.0);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    try {
      long substeps = 0;
      double err = 0.0;
      switch (cfg.method) {
        case Method::ngd:
          w = ngd_step(*geo.metric, obj, w, cfg.eta);
          break;
        case Method::md_classic:
          w = md_step_classic(*geo.potential, obj, w, cfg.eta);
          break;
        case Method::md_mirrorless: {
          // Single gradient access; the rest is geometry.
          StepResult step = mirrorless_step(*geo.metric, w, obj.gradient(w), cfg.eta, cfg.tol, cfg.flow_mode);
          w = std::move(step.point);
          substeps = step.substeps;
          err = step.error_estimate;
          break;
        }
        case Method::flow_reference:
          break;
      }
      detail::push_point(traj, obj, cfg.eta * static_cast<double>(k + 1), w, substeps, err);
    } catch (const DomainError& e) {
      traj.failure = Failure{k, e.what(), e.exit_time()};
      break;
    } catch (const Error& e) {
      traj.failure = Failure{k, e.what()};
      break;
    }
  }
  return traj;
}

/**
 * Two-scale stochastic mirror descent: the gradient argument is frozen at
 * w(k eta) and the sample refreshes every nu. Carried out exactly in the
 * dual, one nu-slot at a time:
 *   grad psi(w(k eta + (i+1) nu)) = grad psi(w(k eta + i nu)) - nu grad f(w(k eta), z_slot).
 * When nu > eta (nu = c eta) a sample is reused for c consecutive steps.
 */
inline Trajectory run_two_scale_stochastic(const RunConfig& cfg, const Potential& psi,
                                           const StochasticObjective& sobj) {
  if (!cfg.stochastic) throw InvalidArgument("two-scale run needs a stochastic block");
  if (!(cfg.eta > 0)) throw InvalidArgument("stepsize eta must be positive");
  require_dim(cfg.w_init, psi.dim(), "w_init");
  if (sobj.dim() != psi.dim()) throw InvalidArgument("objective and potential dimensions differ");
  const StochasticBlock& sb = *cfg.stochastic;
  const ScaleRatio ratio = scale_ratio(cfg.eta, sb.nu);
  const double slot_length = ratio.per_step > 1 ? sb.nu : cfg.eta;

  auto slot_gradient = [&](const Vector& w, std::uint64_t slot) -> Vector {
    if (sb.sampling == SampleMode::full_pool) {
      Vector g = Vector::Zero(w.size());
      for (Eigen::Index i = 0; i < sobj.sample_count(); ++i) g += sobj.sample_gradient(w, i);
      return g / static_cast<double>(sobj.sample_count());
    }
    return sobj.sample_gradient(w, sobj.sample_index(sb.seed, slot));
  };

  Trajectory traj;
  Vector w = cfg.w_init;
  detail::push_point(traj, sobj, 0.0, w, 0, 0.0);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    try {
      Vector dual = psi.link(w);
      for (long i = 0; i < ratio.per_step; ++i) {
        const std::uint64_t slot = ratio.per_step > 1 ? k * static_cast<std::uint64_t>(ratio.per_step) + i
                                                      : k / static_cast<std::uint64_t>(ratio.reuse);
        dual -= slot_length * slot_gradient(w, slot);
      }
      w = psi.inverse_link(dual);
      detail::push_point(traj, sobj, cfg.eta * static_cast<double>(k + 1), w, ratio.per_step, 0.0);
    } catch (const DomainError& e) {
      traj.failure = Failure{k, e.what(), e.exit_time()};
      break;
    } catch (const Error& e) {
      traj.failure = Failure{k, e.what()};
      break;
    }
  }
  return traj;
}

}  // namespace mirrorless
