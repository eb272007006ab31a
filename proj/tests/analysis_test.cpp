#include "mirrorless/analysis.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace mirrorless {
namespace {

using testing::Rng;
using testing::vec;

Params dim_params(Eigen::Index d) { return Params{{"dim", static_cast<double>(d)}}; }

PotentialPtr potential(const std::string& name, Eigen::Index d, double alpha = 1.0) {
  return make_builtin_potential(name, Params{{"dim", static_cast<double>(d)}, {"alpha", alpha}});
}

std::vector<Vector> random_points(Rng& rng, int n, Eigen::Index d, double lo, double hi) {
  std::vector<Vector> pts;
  for (int i = 0; i < n; ++i) pts.push_back(testing::random_vector(rng, d, lo, hi));
  return pts;
}

TEST(HessianMapCheck, RankOneBumpWitness) {
  auto m = make_builtin_metric("rank_one_bump", dim_params(2));
  const HessianMapReport rep = hessian_map_check(*m, {vec({1, 2})});
  EXPECT_FALSE(rep.is_hessian_map);
  EXPECT_NEAR(rep.witness_violation, 2.0, 1e-2);
  // |d_1 H_12 - d_2 H_11| in one-based indices.
  EXPECT_EQ(rep.witness_indices, (std::array<Eigen::Index, 3>{0, 1, 0}));
  EXPECT_EQ(rep.witness_point, vec({1, 2}));
  EXPECT_EQ(rep.points_tested, 1u);
  EXPECT_DOUBLE_EQ(rep.fd_step, 1e-5);
}

TEST(HessianMapCheck, Examples) {
  Rng rng(1);
  auto arcsinh = make_builtin_metric("diag_arcsinh", Params{{"dim", 3.0}, {"alpha", 1.0}});
  const auto a = hessian_map_check(*arcsinh, random_points(rng, 20, 3, -3, 3));
  EXPECT_TRUE(a.is_hessian_map);
  EXPECT_LE(a.max_violation, 1e-4);
  EXPECT_EQ(a.points_tested, 20u);

  auto euc = make_builtin_metric("euclidean", dim_params(3));
  const auto e = hessian_map_check(*euc, random_points(rng, 5, 3, -3, 3));
  EXPECT_TRUE(e.is_hessian_map);
  EXPECT_EQ(e.max_violation, 0.0);

  auto ent = make_builtin_metric("hessian_of", Params{{"potential", std::string("neg_entropy")}, {"dim", 3.0}});
  const auto n = hessian_map_check(*ent, random_points(rng, 20, 3, 0.2, 3));
  EXPECT_TRUE(n.is_hessian_map);
  EXPECT_LE(n.max_violation, 1e-4);

  auto lyap = make_builtin_metric("lyapunov_inverse", Params{{"n", 2.0}});
  std::vector<Vector> spd;
  for (int i = 0; i < 10; ++i) spd.push_back(sym_vec(testing::random_spd(rng, 2, 0.3)));
  EXPECT_FALSE(hessian_map_check(*lyap, spd).is_hessian_map);
}

TEST(HessianMapCheck, Errors) {
  auto ent = make_builtin_metric("hessian_of", Params{{"potential", std::string("neg_entropy")}, {"dim", 2.0}});
  EXPECT_THROW(hessian_map_check(*ent, {vec({1e-6, 1})}), DomainError);
  auto euc = make_builtin_metric("euclidean", dim_params(2));
  EXPECT_THROW(hessian_map_check(*euc, {vec({1, 1})}, 0.0), InvalidArgument);
}

TEST(HessianMapCheck, PullbackUnderCubicChartIsRecorded) {
  Rng rng(2);
  auto ent = make_builtin_metric("hessian_of", Params{{"potential", std::string("neg_entropy")}, {"dim", 2.0}});
  auto chart = make_chart("cubic", dim_params(2));
  auto pulled = pullback_metric(ent, chart);
  std::vector<Vector> pts;
  for (const Vector& w : random_points(rng, 10, 2, 0.3, 2.0)) pts.push_back(chart->forward(w));
  const auto rep = hessian_map_check(*pulled, pts);
  EXPECT_EQ(rep.points_tested, 10u);
  EXPECT_TRUE(std::isfinite(rep.max_violation));
}

TEST(Theorem1Check, Examples) {
  Rng rng(3);
  QuadraticObjective quad(testing::random_spd(rng, 3), testing::random_normal(rng, 3));
  const auto ent = theorem1_check(potential("neg_entropy", 3), quad, vec({0.5, 1.0, 1.5}), 0.1, 50, 1e-10);
  EXPECT_TRUE(ent.passed);
  EXPECT_LE(ent.max_deviation, 1e-8);
  EXPECT_DOUBLE_EQ(ent.threshold, 10 * 1e-10 * 50);

  const auto sq = theorem1_check(potential("sq_euclidean", 3), quad, vec({1, -1, 2}), 0.1, 50, 1e-10);
  EXPECT_LE(sq.max_deviation, 1e-12);

  const Matrix a = testing::random_matrix(rng, 6, 4) / std::sqrt(24.0);
  LeastSquaresObjective ls(a, testing::random_normal(rng, 6));
  const auto ash = theorem1_check(potential("arcsinh", 4, 0.5), ls, Vector::Zero(4), 0.1, 100, 1e-10);
  EXPECT_LE(ash.max_deviation, 1e-7);
  EXPECT_EQ(ash.classic.size(), 101u);
}

TEST(RateBoundCheck, EuclideanOneStep) {
  auto f = std::make_shared<QuadraticObjective>(Matrix::Identity(2, 2), Vector::Zero(2));
  const auto rep = rate_bound_check(make_builtin_metric("euclidean", dim_params(2)), 1.0, 1.0, *f, vec({1, 1}), 5);
  EXPECT_TRUE(rep.passed);
  EXPECT_DOUBLE_EQ(rep.eta, 1.0);
  EXPECT_LE(rep.trajectory.meta[1].objective, 1e-30);
  EXPECT_TRUE(rep.eigen_bounds_hold);
}

TEST(RateBoundCheck, BoundedRankOne) {
  auto f = std::make_shared<QuadraticObjective>(Matrix::Identity(2, 2), Vector::Zero(2));
  const auto rep =
      rate_bound_check(make_builtin_metric("bounded_rank_one", dim_params(2)), 1.0, 2.0, *f, vec({1, 1}), 200);
  EXPECT_DOUBLE_EQ(rep.eta, 0.5);
  EXPECT_DOUBLE_EQ(rep.rate, 0.25);
  EXPECT_TRUE(rep.eigen_bounds_hold);
  EXPECT_TRUE(rep.passed) << rep.min_margin;
  EXPECT_EQ(rep.margins.size(), 201u);
  for (double m : rep.margins) EXPECT_GE(m, -1e-10);
}

TEST(RateBoundCheck, FixedDiagonal) {
  Matrix h = Vector(vec({1, 2})).asDiagonal();
  auto f = std::make_shared<QuadraticObjective>(h, Vector::Zero(2));
  const auto rep =
      rate_bound_check(make_builtin_metric("fixed_spd", Params{{"matrix", h}}), 1.0, 2.0, *f, vec({1, -1}), 50);
  EXPECT_DOUBLE_EQ(rep.eta, 0.25);
  EXPECT_TRUE(rep.passed);
  EXPECT_TRUE(rep.eigen_bounds_hold);
}

TEST(RateBoundCheck, ViolatedEigenBoundsAreReported) {
  auto f = std::make_shared<QuadraticObjective>(Matrix::Identity(2, 2), Vector::Zero(2));
  // rank_one_bump reaches 1 + |w|^2 = 3 at w0 = (1, 1), above beta = 2.
  const auto rep =
      rate_bound_check(make_builtin_metric("rank_one_bump", dim_params(2)), 1.0, 2.0, *f, vec({1, 1}), 20);
  EXPECT_FALSE(rep.eigen_bounds_hold);
  EXPECT_EQ(rep.first_violation, 0u);
}

// A quadratic that declares its curvature but not its minimizer.
class HintlessQuadratic final : public Objective {
 public:
  explicit HintlessQuadratic(QuadraticObjective q) : Objective(q.dim()), q_(std::move(q)) {}
  std::string name() const override { return "hintless"; }
  std::optional<double> strong_convexity() const override { return q_.strong_convexity(); }
  std::optional<double> smoothness() const override { return q_.smoothness(); }

 protected:
  double do_value(const Eigen::Ref<const Vector>& w) const override { return q_.value(w); }
  Vector do_gradient(const Eigen::Ref<const Vector>& w) const override { return q_.gradient(w); }

 private:
  QuadraticObjective q_;
};

TEST(RateBoundCheck, OptimumFromLongFlowWhenNoHint) {
  Matrix h = Vector(vec({1, 2})).asDiagonal();
  QuadraticObjective q(h, vec({1, -1}));
  const auto rep = rate_bound_check(make_builtin_metric("bounded_rank_one", dim_params(2)), 1.0, 2.0,
                                    HintlessQuadratic(q), vec({1, 1}), 50);
  EXPECT_NEAR(rep.f_star, q.optimum()->value, 1e-10);
  EXPECT_TRUE(rep.passed);
}

TEST(BregmanProjection, Examples) {
  Matrix a(1, 2);
  a << 1, 1;
  const Vector w = bregman_projection(*potential("sq_euclidean", 2), Vector::Zero(2), a, vec({2}));
  EXPECT_LE((w - vec({1, 1})).norm(), 1e-12);

  Rng rng(4);
  const Matrix a2 = testing::random_matrix(rng, 2, 4);
  const Vector w0 = testing::random_vector(rng, 4, 0.5, 1.5);
  for (const char* name : {"sq_euclidean", "neg_entropy", "arcsinh"}) {
    EXPECT_LE((bregman_projection(*potential(name, 4), w0, a2, a2 * w0) - w0).norm(), 1e-12) << name;
  }
}

TEST(BregmanProjection, KktAndFeasibility) {
  Rng rng(5);
  for (double alpha : {0.1, 1.0}) {
    const Matrix a = testing::random_matrix(rng, 5, 20);
    const Vector b = testing::random_normal(rng, 5);
    auto psi = potential("arcsinh", 20, alpha);
    const Vector w = bregman_projection(*psi, Vector::Zero(20), a, b);
    EXPECT_LE((a * w - b).norm(), 1e-10 * (1 + b.norm()));
    EXPECT_LE(kkt_residual(*psi, Vector::Zero(20), w, a), 1e-8);
  }
  const Matrix a = testing::random_matrix(rng, 3, 6).cwiseAbs();
  const Vector b = a * testing::random_vector(rng, 6, 0.2, 2.0);
  auto ent = potential("neg_entropy", 6);
  const Vector w0 = Vector::Ones(6);
  const Vector w = bregman_projection(*ent, w0, a, b);
  EXPECT_LE((a * w - b).norm(), 1e-10 * (1 + b.norm()));
  EXPECT_LE(kkt_residual(*ent, w0, w, a), 1e-8);
  // The Euclidean case has a closed form to compare against.
  const Matrix a3 = testing::random_matrix(rng, 2, 5);
  const Vector b3 = testing::random_normal(rng, 2);
  const Vector w03 = testing::random_normal(rng, 5);
  const Vector closed = w03 + a3.transpose() * (a3 * a3.transpose()).ldlt().solve(b3 - a3 * w03);
  EXPECT_LE((bregman_projection(*potential("sq_euclidean", 5), w03, a3, b3) - closed).norm(), 1e-10);
}

TEST(BregmanProjection, Errors) {
  Matrix a(1, 2);
  a << 1, 1;
  // No positive w has w_1 + w_2 = -1.
  EXPECT_THROW(bregman_projection(*potential("neg_entropy", 2), Vector::Ones(2), a, vec({-1})), Error);
  EXPECT_THROW(bregman_projection(*potential("sq_euclidean", 2), Vector::Ones(2), a, vec({1, 2})), InvalidArgument);
}

TEST(KktResidual, ZeroDisplacement) {
  Rng rng(6);
  const Matrix a = testing::random_matrix(rng, 3, 5);
  const Vector w0 = testing::random_normal(rng, 5);
  EXPECT_EQ(kkt_residual(*potential("arcsinh", 5), w0, w0, a), 0.0);
}

TEST(ImplicitBias, FlowLimitIsBregmanProjection) {
  Rng rng(7);
  const Eigen::Index d = 20, n = 5;
  for (double alpha : {0.1, 1.0}) {
    const Matrix a = testing::random_matrix(rng, n, d);
    const Vector b = testing::random_normal(rng, n);
    auto psi = potential("arcsinh", d, alpha);
    LeastSquaresObjective f(a, b);
    const FlowToTarget flow = flow_until(*potential_to_metric(psi), f, Vector::Zero(d), 1e-12);
    ASSERT_TRUE(flow.reached) << alpha;
    const Vector proj = bregman_projection(*psi, Vector::Zero(d), a, b);
    EXPECT_LE(sup_norm(flow.point - proj) / sup_norm(proj), 1e-3) << alpha;
    EXPECT_LE(kkt_residual(*psi, Vector::Zero(d), flow.point, a), 1e-4) << alpha;
  }
}

TEST(Charts, InverseAndJacobian) {
  Rng rng(8);
  Matrix s(2, 2);
  s << 2, 1, 0, 3;
  const std::vector<ChartPtr> charts = {make_chart("identity", dim_params(2)), make_chart("cubic", dim_params(2)),
                                        make_chart("affine", Params{{"S", s}, {"shift", vec({1, -1})}})};
  for (const auto& c : charts) {
    for (int i = 0; i < 50; ++i) {
      const Vector w = testing::random_vector(rng, 2, -3, 3);
      EXPECT_LE(testing::rel_err(c->inverse(c->forward(w)), w), 1e-8) << c->name();
      const Matrix fd = testing::fd_jacobian([&](const Vector& x) { return c->forward(x); }, w);
      EXPECT_LE((fd - c->jacobian(w)).norm(), 1e-4 * c->jacobian(w).norm()) << c->name();
    }
  }
  EXPECT_THROW(make_chart("affine", Params{{"S", Matrix(Matrix::Zero(2, 2))}}), InvalidArgument);
  EXPECT_THROW(make_chart("polar", dim_params(2)), InvalidArgument);
}

TEST(PullbackMetric, Examples) {
  Rng rng(9);
  auto euc = make_builtin_metric("euclidean", dim_params(2));
  auto doubled = pullback_metric(euc, make_chart("affine", Params{{"S", Matrix(2.0 * Matrix::Identity(2, 2))}}));
  for (int i = 0; i < 5; ++i) {
    EXPECT_LE((doubled->materialize(testing::random_normal(rng, 2)) - 0.25 * Matrix::Identity(2, 2)).norm(), 1e-15);
  }

  auto chart = make_chart("cubic", dim_params(2));
  auto cubic = pullback_metric(euc, chart);
  for (int i = 0; i < 10; ++i) {
    const Vector w = testing::random_vector(rng, 2, -2, 2);
    const Vector expected = (1.0 + 3.0 * w.array().square()).square().inverse().matrix();
    EXPECT_LE((cubic->materialize(chart->forward(w)) - Matrix(expected.asDiagonal())).norm(), 1e-12);
  }

  auto bump = make_builtin_metric("rank_one_bump", dim_params(3));
  auto same = pullback_metric(bump, make_chart("identity", dim_params(3)));
  for (int i = 0; i < 10; ++i) {
    const Vector w = testing::random_normal(rng, 3);
    EXPECT_LE((same->materialize(w) - bump->materialize(w)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PullbackMetric, LocalDistanceIsChartInvariant) {
  Rng rng(10);
  auto chart = make_chart("cubic", dim_params(3));
  for (const char* name : {"rank_one_bump", "euclidean"}) {
    auto base = make_builtin_metric(name, dim_params(3));
    auto pulled = pullback_metric(base, chart);
    for (int i = 0; i < 20; ++i) {
      const Vector w = testing::random_vector(rng, 3, -1.5, 1.5);
      const Vector dw = 1e-6 * testing::random_normal(rng, 3);
      const double d0 = local_distance(*base, w, dw);
      const double d1 = local_distance(*pulled, chart->forward(w), chart->jacobian(w) * dw);
      EXPECT_NEAR(d0, d1, 1e-10 * d0) << name;
    }
  }
}

TEST(ChartTransport, FlowIsInvariantUnderCubicChart) {
  Rng rng(11);
  auto f = std::make_shared<QuadraticObjective>(testing::random_spd(rng, 2), testing::random_normal(rng, 2));
  const auto rep = chart_transport_check(Method::flow_reference, make_builtin_metric("euclidean", dim_params(2)),
                                         make_chart("cubic", dim_params(2)), f, vec({0.5, -0.3}), 0.1, 20, 1e-10);
  EXPECT_EQ(rep.deltas.size(), 21u);
  EXPECT_LE(rep.max_delta, 1e-7);

  const auto bump = chart_transport_check(Method::flow_reference, make_builtin_metric("rank_one_bump", dim_params(2)),
                                          make_chart("cubic", dim_params(2)), f, vec({0.5, -0.3}), 0.1, 20, 1e-10);
  EXPECT_LE(bump.max_delta, 1e-7);
}

TEST(ChartTransport, MirrorlessIsExactUnderAffineCharts) {
  Rng rng(12);
  auto f = std::make_shared<QuadraticObjective>(testing::random_spd(rng, 2), testing::random_normal(rng, 2));
  Matrix s = Vector(vec({2, 3})).asDiagonal();
  for (const char* name : {"euclidean", "rank_one_bump"}) {
    const auto rep = chart_transport_check(Method::md_mirrorless, make_builtin_metric(name, dim_params(2)),
                                           make_chart("affine", Params{{"S", s}}), f, vec({0.5, -0.3}), 0.1, 20);
    EXPECT_TRUE(rep.affine);
    EXPECT_LE(rep.max_delta, 1e-8) << name;
  }
}

TEST(ChartTransport, NonAffineGapShrinksWithEta) {
  Rng rng(13);
  auto f = std::make_shared<QuadraticObjective>(testing::random_spd(rng, 2), testing::random_normal(rng, 2));
  auto metric = make_builtin_metric("euclidean", dim_params(2));
  auto chart = make_chart("cubic", dim_params(2));
  const double horizon = 1.0;
  const auto coarse = chart_transport_check(Method::md_mirrorless, metric, chart, f, vec({0.5, -0.3}), 0.1, 10);
  const auto fine = chart_transport_check(Method::md_mirrorless, metric, chart, f, vec({0.5, -0.3}), 0.05, 20);
  ASSERT_DOUBLE_EQ(0.1 * 10, horizon);
  EXPECT_GT(coarse.max_delta, 1e-8);
  const double ratio = coarse.max_delta / fine.max_delta;
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 2.5);
  EXPECT_THROW(chart_transport_check(Method::md_classic, metric, chart, f, vec({0.5, -0.3}), 0.1, 10),
               InvalidArgument);
}

TEST(DiscretizationSweep, EuclideanColumnsCoincide) {
  Rng rng(14);
  QuadraticObjective f(testing::random_spd(rng, 3), testing::random_normal(rng, 3));
  const auto rows =
      discretization_error_sweep(make_builtin_metric("euclidean", dim_params(3)), f, vec({1, 0, -1}), 1.0, {0.1, 0.05});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_NEAR(rows[0].endpoint_error, rows[1].endpoint_error, 1e-12);
  EXPECT_NEAR(rows[2].endpoint_error, rows[3].endpoint_error, 1e-12);
}

TEST(DiscretizationSweep, BothMethodsAreFirstOrder) {
  Rng rng(15);
  const Matrix a = testing::random_matrix(rng, 6, 4).cwiseAbs() / 3.0;
  const Vector b = testing::random_vector(rng, 6, 0.5, 1.5);
  LeastSquaresObjective f(a, b);
  auto metric = make_builtin_metric("hessian_of", Params{{"potential", std::string("neg_entropy")}, {"dim", 4.0}});
  const auto rows = discretization_error_sweep(metric, f, Vector::Ones(4), 1.0, {0.1, 0.05, 0.025});
  for (Method m : {Method::ngd, Method::md_mirrorless}) {
    for (double r : halving_ratios(rows, m)) {
      EXPECT_GE(r, 1.6) << to_string(m);
      EXPECT_LE(r, 2.4) << to_string(m);
    }
  }
}

TEST(DiscretizationSweep, ArcsinhComparisonIsReported) {
  Rng rng(16);
  QuadraticObjective f(testing::random_spd(rng, 3), testing::random_normal(rng, 3));
  const auto rows = discretization_error_sweep(make_builtin_metric("diag_arcsinh", Params{{"dim", 3.0}, {"alpha", 1.0}}),
                                               f, vec({1, -1, 0.5}), 1.0, {0.1, 0.05});
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    RecordProperty("eta_" + std::to_string(i / 2) + "_md_minus_ngd",
                   std::to_string(rows[i + 1].endpoint_error - rows[i].endpoint_error));
    EXPECT_TRUE(std::isfinite(rows[i].endpoint_error) && std::isfinite(rows[i + 1].endpoint_error));
  }
  EXPECT_THROW(discretization_error_sweep(make_builtin_metric("euclidean", dim_params(3)), f, Vector::Zero(3), 1.0,
                                          {0.3}),
               InvalidArgument);
}

}  // namespace
}  // namespace mirrorless
