#pragma once

#include "mirrorless/core.hpp"
#include "mirrorless/metric.hpp"
#include "mirrorless/params.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mirrorless {

/**
 * Strictly convex potential psi on (a subset of) R^d with its link
 * function grad psi, Hessian, and inverse link.
 */
class Potential {
 public:
  explicit Potential(Eigen::Index dim) : dim_(dim) {
    if (dim < 1) throw InvalidArgument("potential dimension must be positive");
  }
  virtual ~Potential() = default;

  Eigen::Index dim() const { return dim_; }
  virtual std::string name() const = 0;

  bool in_domain(const Eigen::Ref<const Vector>& w) const {
    return w.size() == dim_ && w.allFinite() && do_in_domain(w);
  }

  double value(const Eigen::Ref<const Vector>& w) const {
    check_point(w);
    return do_value(w);
  }
  Vector link(const Eigen::Ref<const Vector>& w) const {
    check_point(w);
    return do_link(w);
  }
  Matrix hessian(const Eigen::Ref<const Vector>& w) const {
    check_point(w);
    return do_hessian(w);
  }

  /// (grad psi)^{-1}(z): closed form when available, otherwise damped Newton
  /// started from initial_guess(z).
  Vector inverse_link(const Eigen::Ref<const Vector>& z) const;

  virtual bool has_closed_form_inverse() const { return false; }

  /// Starting point for the Newton fallback.
  virtual Vector initial_guess(const Eigen::Ref<const Vector>&) const { return Vector::Zero(dim_); }

 protected:
  virtual bool do_in_domain(const Eigen::Ref<const Vector>&) const { return true; }
  virtual double do_value(const Eigen::Ref<const Vector>& w) const = 0;
  virtual Vector do_link(const Eigen::Ref<const Vector>& w) const = 0;
  virtual Matrix do_hessian(const Eigen::Ref<const Vector>& w) const = 0;
  virtual std::optional<Vector> closed_form_inverse(const Eigen::Ref<const Vector>&) const {
    return std::nullopt;
  }

  void check_point(const Eigen::Ref<const Vector>& w) const {
    require_dim(w, dim_, "potential point");
    if (!in_domain(w)) throw DomainError(name() + ": point outside potential domain");
  }

 private:
  Eigen::Index dim_;
};

using PotentialPtr = std::shared_ptr<const Potential>;

/**
 * Solves link(w) = z by damped Newton with Armijo backtracking on
 * |link(w) - z|^2. Steps that leave the domain are halved as well.
 * Stops when |link(w) - z| <= 1e-10 (1 + |z|); at most 100 iterations.
 */
inline Vector link_invert_newton(const Potential& psi, const Eigen::Ref<const Vector>& z,
                                 const Eigen::Ref<const Vector>& w_guess) {
  require_dim(z, psi.dim(), "link_invert_newton target");
  if (!z.allFinite()) throw InvalidArgument("link_invert_newton: non-finite target");
  if (!psi.in_domain(w_guess)) throw DomainError(psi.name() + ": Newton initial guess outside domain");

  constexpr int kMaxIter = 100;
  constexpr int kMaxHalvings = 60;
  constexpr double kArmijo = 1e-4;
  const double target = 1e-10 * (1.0 + z.norm());

  Vector w = w_guess;
  Vector r = psi.link(w) - z;
  double merit = r.squaredNorm();
  for (int it = 0; it < kMaxIter; ++it) {
    if (std::sqrt(merit) <= target) return w;
    Eigen::LLT<Matrix> llt(psi.hessian(w));
    if (llt.info() != Eigen::Success) throw DomainError(psi.name() + ": Hessian not positive definite");
    const Vector step = -llt.solve(r);

    double t = 1.0;
    bool accepted = false;
    bool saw_domain_point = false;
    for (int h = 0; h < kMaxHalvings; ++h, t *= 0.5) {
      const Vector trial = w + t * step;
      if (!psi.in_domain(trial)) continue;
      saw_domain_point = true;
      const Vector r_trial = psi.link(trial) - z;
      const double m_trial = r_trial.squaredNorm();
      if (m_trial <= (1.0 - 2.0 * kArmijo * t) * merit) {
        w = trial;
        r = r_trial;
        merit = m_trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!saw_domain_point) throw DomainError(psi.name() + ": Newton line search left the domain");
      // No decrease possible at machine precision; accept if we are close.
      if (std::sqrt(merit) <= 1e3 * target) return w;
      throw ConvergenceError(psi.name() + ": Newton line search stalled");
    }
  }
  if (std::sqrt(merit) <= target) return w;
  throw ConvergenceError(psi.name() + ": link inversion did not converge in 100 iterations");
}

inline Vector Potential::inverse_link(const Eigen::Ref<const Vector>& z) const {
  require_dim(z, dim_, "inverse_link argument");
  if (!z.allFinite()) throw DomainError(name() + ": non-finite dual point");
  if (auto w = closed_form_inverse(z)) {
    if (!in_domain(*w)) throw DomainError(name() + ": dual point outside the range of the link");
    return *w;
  }
  return link_invert_newton(*this, z, initial_guess(z));
}

/// psi(w) = |w|^2 / 2.
class SqEuclideanPotential final : public Potential {
 public:
  using Potential::Potential;
  std::string name() const override { return "sq_euclidean"; }
  bool has_closed_form_inverse() const override { return true; }

 protected:
  double do_value(const Eigen::Ref<const Vector>& w) const override { return 0.5 * w.squaredNorm(); }
  Vector do_link(const Eigen::Ref<const Vector>& w) const override { return w; }
  Matrix do_hessian(const Eigen::Ref<const Vector>&) const override { return Matrix::Identity(dim(), dim()); }
  std::optional<Vector> closed_form_inverse(const Eigen::Ref<const Vector>& z) const override {
    return Vector(z);
  }
};

/// psi(w) = sum w_i log w_i on the positive orthant.
class NegEntropyPotential final : public Potential {
 public:
  using Potential::Potential;
  std::string name() const override { return "neg_entropy"; }
  bool has_closed_form_inverse() const override { return true; }
  Vector initial_guess(const Eigen::Ref<const Vector>&) const override { return Vector::Ones(dim()); }

 protected:
  bool do_in_domain(const Eigen::Ref<const Vector>& w) const override { return (w.array() > 0.0).all(); }
  double do_value(const Eigen::Ref<const Vector>& w) const override {
    return (w.array() * w.array().log()).sum();
  }
  Vector do_link(const Eigen::Ref<const Vector>& w) const override { return (w.array().log() + 1.0).matrix(); }
  Matrix do_hessian(const Eigen::Ref<const Vector>& w) const override {
    return w.cwiseInverse().asDiagonal();
  }
  std::optional<Vector> closed_form_inverse(const Eigen::Ref<const Vector>& z) const override {
    return Vector((z.array() - 1.0).exp().matrix());
  }
};

/**
 * Separable p-power psi(w) = (1/p) sum |w_i|^p, 1 < p <= 2. For p < 2 the
 * Hessian blows up on the coordinate hyperplanes, so the domain excludes them.
 */
class PPowerPotential final : public Potential {
 public:
  PPowerPotential(Eigen::Index dim, double p) : Potential(dim), p_(p) {
    if (!(p > 1.0 && p <= 2.0)) throw InvalidArgument("p_power: p must satisfy 1 < p <= 2");
  }
  std::string name() const override { return "p_power"; }
  bool has_closed_form_inverse() const override { return true; }
  double p() const { return p_; }

 protected:
  bool do_in_domain(const Eigen::Ref<const Vector>& w) const override {
    return p_ == 2.0 || (w.array() != 0.0).all();
  }
  double do_value(const Eigen::Ref<const Vector>& w) const override {
    return w.array().abs().pow(p_).sum() / p_;
  }
  Vector do_link(const Eigen::Ref<const Vector>& w) const override {
    return (w.array().sign() * w.array().abs().pow(p_ - 1.0)).matrix();
  }
  Matrix do_hessian(const Eigen::Ref<const Vector>& w) const override {
    return Vector(((p_ - 1.0) * w.array().abs().pow(p_ - 2.0)).matrix()).asDiagonal();
  }
  std::optional<Vector> closed_form_inverse(const Eigen::Ref<const Vector>& z) const override {
    return Vector((z.array().sign() * z.array().abs().pow(1.0 / (p_ - 1.0))).matrix());
  }

 private:
  double p_;
};

/**
 * psi_alpha(w) = sum w_i asinh(w_i / 2 alpha^2) - sqrt(w_i^2 + 4 alpha^4),
 * the potential behind the diagonal linear network w = u+^2 - u-^2.
 */
class ArcsinhPotential final : public Potential {
 public:
  ArcsinhPotential(Eigen::Index dim, double alpha) : Potential(dim), alpha_(alpha) {
    if (!(alpha > 0) || !std::isfinite(alpha)) throw InvalidArgument("arcsinh: alpha must be > 0");
  }
  std::string name() const override { return "arcsinh"; }
  bool has_closed_form_inverse() const override { return true; }
  double alpha() const { return alpha_; }

 protected:
  double do_value(const Eigen::Ref<const Vector>& w) const override {
    const double c = scale();
    return (w.array() * (w.array() / c).asinh() - (w.array().square() + c * c).sqrt()).sum();
  }
  Vector do_link(const Eigen::Ref<const Vector>& w) const override {
    return (w.array() / scale()).asinh().matrix();
  }
  Matrix do_hessian(const Eigen::Ref<const Vector>& w) const override {
    const double c = scale();
    return Vector((w.array().square() + c * c).rsqrt().matrix()).asDiagonal();
  }
  std::optional<Vector> closed_form_inverse(const Eigen::Ref<const Vector>& z) const override {
    return Vector((scale() * z.array().sinh()).matrix());
  }

 private:
  double scale() const { return 2.0 * alpha_ * alpha_; }
  double alpha_;
};

/// D(w, w') = psi(w) - psi(w') - <grad psi(w'), w - w'>.
inline double bregman_divergence(const Potential& psi, const Eigen::Ref<const Vector>& w,
                                 const Eigen::Ref<const Vector>& w_prime) {
  const double d = psi.value(w) - psi.value(w_prime) - psi.link(w_prime).dot(w - w_prime);
  return std::max(d, 0.0);
}

/// The Hessian metric H(w) = hess psi(w).
class HessianMetric final : public MetricTensor {
 public:
  explicit HessianMetric(PotentialPtr psi) : MetricTensor(checked(psi)->dim()), psi_(std::move(psi)) {}
  std::string name() const override { return "hessian_of(" + psi_->name() + ")"; }
  MetricCapabilities capabilities() const override { return {true, true, false, true}; }
  PotentialPtr potential() const override { return psi_; }

 protected:
  bool do_in_domain(const Eigen::Ref<const Vector>& w) const override { return psi_->in_domain(w); }
  Matrix do_materialize(const Eigen::Ref<const Vector>& w) const override { return psi_->hessian(w); }

 private:
  static const PotentialPtr& checked(const PotentialPtr& p) {
    if (!p) throw InvalidArgument("hessian metric needs a potential");
    return p;
  }
  PotentialPtr psi_;
};

inline MetricPtr potential_to_metric(PotentialPtr psi) {
  return std::make_shared<HessianMetric>(std::move(psi));
}

inline const std::vector<std::string>& builtin_potential_names() {
  static const std::vector<std::string> names{"sq_euclidean", "neg_entropy", "p_power", "arcsinh"};
  return names;
}

/// Params: dim (all), p (p_power), alpha (arcsinh).
inline PotentialPtr make_builtin_potential(const std::string& name, const Params& params) {
  const Eigen::Index d = params.count("dim");
  if (name == "sq_euclidean") return std::make_shared<SqEuclideanPotential>(d);
  if (name == "neg_entropy") return std::make_shared<NegEntropyPotential>(d);
  if (name == "p_power") return std::make_shared<PPowerPotential>(d, params.number("p"));
  if (name == "arcsinh") return std::make_shared<ArcsinhPotential>(d, params.number("alpha"));
  throw InvalidArgument("unknown potential '" + name + "'");
}

}  // namespace mirrorless
