#pragma once

#include "mirrorless/core.hpp"
#include "mirrorless/metric.hpp"
#include "mirrorless/params.hpp"
#include "mirrorless/potentials.hpp"

#include <string>
#include <vector>

namespace mirrorless {

inline const std::vector<std::string>& builtin_metric_names() {
  static const std::vector<std::string> names{"euclidean",        "fixed_spd",    "hessian_of",      "rank_one_bump",
                                              "bounded_rank_one", "diag_arcsinh", "lyapunov_inverse"};
  return names;
}

/**
 * Builds one of the named metrics.
 *
 *   euclidean, rank_one_bump, bounded_rank_one : dim
 *   fixed_spd                                  : matrix
 *   diag_arcsinh                               : dim, alpha
 *   lyapunov_inverse                           : n (matrix side; dim = n(n+1)/2)
 *   hessian_of                                 : potential (name) + that potential's params
 */
inline MetricPtr make_builtin_metric(const std::string& name, const Params& params) {
  if (name == "euclidean") return std::make_shared<EuclideanMetric>(params.count("dim"));
  if (name == "fixed_spd") return std::make_shared<FixedSpdMetric>(params.matrix("matrix"));
  if (name == "rank_one_bump") return std::make_shared<RankOneMetric>(params.count("dim"), false);
  if (name == "bounded_rank_one") return std::make_shared<RankOneMetric>(params.count("dim"), true);
  if (name == "diag_arcsinh") return std::make_shared<DiagArcsinhMetric>(params.count("dim"), params.number("alpha"));
  if (name == "lyapunov_inverse") return std::make_shared<LyapunovInverseMetric>(params.count("n"));
  if (name == "hessian_of") return potential_to_metric(make_builtin_potential(params.text("potential"), params));
  throw InvalidArgument("unknown metric '" + name + "'");
}

/// H(w)^{-1} v.
inline Vector metric_solve(const MetricTensor& metric, const Eigen::Ref<const Vector>& w,
                           const Eigen::Ref<const Vector>& v) {
  return metric.solve(w, v);
}

/// sqrt(dw^T H(w) dw), the infinitesimal length of dw at w.
inline double local_distance(const MetricTensor& metric, const Eigen::Ref<const Vector>& w,
                             const Eigen::Ref<const Vector>& dw) {
  const double q = dw.dot(metric.apply(w, dw));
  return std::sqrt(std::max(q, 0.0));
}

}  // namespace mirrorless
