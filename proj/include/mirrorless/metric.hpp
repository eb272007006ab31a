#pragma once

#include "mirrorless/core.hpp"

#include <memory>
#include <string>

namespace mirrorless {

class Potential;

/// What a metric can do beyond dense materialization.
struct MetricCapabilities {
  bool materialize = true;
  bool apply = true;
  bool closed_form_solve = false;
  /// The frozen-gradient flow has an exact solution (Hessian of a potential).
  bool closed_form_flow = false;
};

/**
 * A smoothly varying SPD operator family H(w) on R^d.
 *
 * The public entry points validate dimensions and the domain and then
 * dispatch to the do_* hooks. Implementations are immutable.
 */
class MetricTensor {
 public:
  explicit MetricTensor(Eigen::Index dim) : dim_(dim) {
    if (dim < 1) throw InvalidArgument("metric dimension must be positive");
  }
  virtual ~MetricTensor() = default;

  Eigen::Index dim() const { return dim_; }
  virtual std::string name() const = 0;
  virtual MetricCapabilities capabilities() const { return {}; }

  /// Whether H is defined (and SPD) at w.
  bool in_domain(const Eigen::Ref<const Vector>& w) const {
    return w.size() == dim_ && w.allFinite() && do_in_domain(w);
  }

  Matrix materialize(const Eigen::Ref<const Vector>& w) const {
    check_point(w);
    return do_materialize(w);
  }

  Vector apply(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const {
    check_point(w);
    require_dim(v, dim_, "metric apply");
    return do_apply(w, v);
  }

  /// x with H(w) x = v.
  Vector solve(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const {
    check_point(w);
    require_dim(v, dim_, "metric solve");
    return do_solve(w, v);
  }

  /// Potential whose Hessian this metric is, when known in closed form.
  virtual std::shared_ptr<const Potential> potential() const { return nullptr; }

 protected:
  virtual bool do_in_domain(const Eigen::Ref<const Vector>&) const { return true; }
  virtual Matrix do_materialize(const Eigen::Ref<const Vector>& w) const = 0;
  virtual Vector do_apply(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const {
    return do_materialize(w) * v;
  }
  virtual Vector do_solve(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const {
    const Matrix h = do_materialize(w);
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success || !h.allFinite()) {
      throw DomainError(name() + ": metric is not positive definite at the given point");
    }
    return llt.solve(v);
  }

  void check_point(const Eigen::Ref<const Vector>& w) const {
    require_dim(w, dim_, "metric point");
    if (!in_domain(w)) throw DomainError(name() + ": point outside metric domain");
  }

 private:
  Eigen::Index dim_;
};

using MetricPtr = std::shared_ptr<const MetricTensor>;

/// H(w) = I.
class EuclideanMetric final : public MetricTensor {
 public:
  using MetricTensor::MetricTensor;
  std::string name() const override { return "euclidean"; }
  MetricCapabilities capabilities() const override { return {true, true, true, false}; }

 protected:
  Matrix do_materialize(const Eigen::Ref<const Vector>&) const override {
    return Matrix::Identity(dim(), dim());
  }
  Vector do_apply(const Eigen::Ref<const Vector>&, const Eigen::Ref<const Vector>& v) const override { return v; }
  Vector do_solve(const Eigen::Ref<const Vector>&, const Eigen::Ref<const Vector>& v) const override { return v; }
};

/// H(w) = H0 for a fixed SPD matrix.
class FixedSpdMetric final : public MetricTensor {
 public:
  explicit FixedSpdMetric(Matrix h0) : MetricTensor(h0.rows()), h0_(std::move(h0)), llt_(h0_) {
    if (!is_spd(h0_)) throw InvalidArgument("fixed_spd: matrix is not symmetric positive definite");
  }
  std::string name() const override { return "fixed_spd"; }
  MetricCapabilities capabilities() const override { return {true, true, true, false}; }
  const Matrix& matrix() const { return h0_; }

 protected:
  Matrix do_materialize(const Eigen::Ref<const Vector>&) const override { return h0_; }
  Vector do_apply(const Eigen::Ref<const Vector>&, const Eigen::Ref<const Vector>& v) const override {
    return h0_ * v;
  }
  Vector do_solve(const Eigen::Ref<const Vector>&, const Eigen::Ref<const Vector>& v) const override {
    return llt_.solve(v);
  }

 private:
  Matrix h0_;
  Eigen::LLT<Matrix> llt_;
};

/**
 * H(w) = I + c(w) w w^T. With c = 1 this is the induced metric of the
 * paraboloid graph (w, |w|^2/2); with c = 1/(1+|w|^2) the eigenvalues stay
 * in [1, 2) everywhere.
 */
class RankOneMetric final : public MetricTensor {
 public:
  RankOneMetric(Eigen::Index dim, bool bounded) : MetricTensor(dim), bounded_(bounded) {}
  std::string name() const override { return bounded_ ? "bounded_rank_one" : "rank_one_bump"; }
  MetricCapabilities capabilities() const override { return {true, true, true, false}; }

 protected:
  Matrix do_materialize(const Eigen::Ref<const Vector>& w) const override {
    return Matrix::Identity(dim(), dim()) + scale(w) * w * w.transpose();
  }
  Vector do_apply(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const override {
    return v + scale(w) * w.dot(v) * w;
  }
  // Sherman-Morrison.
  Vector do_solve(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const override {
    const double c = scale(w);
    return v - (c * w.dot(v) / (1.0 + c * w.squaredNorm())) * w;
  }

 private:
  double scale(const Eigen::Ref<const Vector>& w) const {
    return bounded_ ? 1.0 / (1.0 + w.squaredNorm()) : 1.0;
  }
  bool bounded_;
};

/// Induced metric of the diagonal-network parametrization w = u+^2 - u-^2:
/// H(w) = diag(1 / sqrt(w^2 + 4 alpha^4)).
class DiagArcsinhMetric final : public MetricTensor {
 public:
  DiagArcsinhMetric(Eigen::Index dim, double alpha) : MetricTensor(dim), alpha_(alpha) {
    if (!(alpha > 0) || !std::isfinite(alpha)) throw InvalidArgument("diag_arcsinh: alpha must be > 0");
  }
  std::string name() const override { return "diag_arcsinh"; }
  MetricCapabilities capabilities() const override { return {true, true, true, false}; }
  double alpha() const { return alpha_; }

 protected:
  Matrix do_materialize(const Eigen::Ref<const Vector>& w) const override {
    return inv_diag(w).cwiseInverse().asDiagonal();
  }
  Vector do_apply(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const override {
    return v.cwiseQuotient(inv_diag(w));
  }
  Vector do_solve(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const override {
    return v.cwiseProduct(inv_diag(w));
  }

 private:
  Vector inv_diag(const Eigen::Ref<const Vector>& w) const {
    const double a4 = 4.0 * std::pow(alpha_, 4);
    return (w.array().square() + a4).sqrt().matrix();
  }
  double alpha_;
};

/**
 * Metric on symmetric n x n matrices W (symmetric-vectorized) whose inverse
 * is the Lyapunov operator V -> W V + V W. Defined on SPD W.
 */
class LyapunovInverseMetric final : public MetricTensor {
 public:
  explicit LyapunovInverseMetric(Eigen::Index n) : MetricTensor(sym_vec_size(n)), n_(n) {
    if (n < 1) throw InvalidArgument("lyapunov_inverse: n must be positive");
  }
  std::string name() const override { return "lyapunov_inverse"; }
  MetricCapabilities capabilities() const override { return {true, true, true, false}; }
  Eigen::Index side() const { return n_; }

 protected:
  bool do_in_domain(const Eigen::Ref<const Vector>& w) const override {
    Eigen::LLT<Matrix> llt(sym_mat(w));
    return llt.info() == Eigen::Success;
  }

  // Inverting the Lyapunov operator in the eigenbasis of W.
  Vector do_apply(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const override {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym_mat(w));
    const Matrix& q = es.eigenvectors();
    const Vector& lam = es.eigenvalues();
    Matrix x = q.transpose() * sym_mat(v) * q;
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < n_; ++j) x(i, j) /= lam(i) + lam(j);
    return sym_vec(q * x * q.transpose());
  }

  Vector do_solve(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& v) const override {
    const Matrix wm = sym_mat(w);
    const Matrix vm = sym_mat(v);
    return sym_vec(wm * vm + vm * wm);
  }

  Matrix do_materialize(const Eigen::Ref<const Vector>& w) const override {
    const Eigen::Index d = dim();
    Matrix h(d, d);
    for (Eigen::Index k = 0; k < d; ++k) h.col(k) = do_apply(w, Vector::Unit(d, k));
    return 0.5 * (h + h.transpose());
  }

 private:
  Eigen::Index n_;
};

}  // namespace mirrorless
