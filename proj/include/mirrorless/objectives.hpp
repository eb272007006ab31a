#pragma once

#include "mirrorless/core.hpp"
#include "mirrorless/params.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mirrorless {

struct OptimumHint {
  Vector point;
  double value = 0.0;
};

/// Differentiable F: R^d -> R.
class Objective {
 public:
  explicit Objective(Eigen::Index dim) : dim_(dim) {
    if (dim < 1) throw InvalidArgument("objective dimension must be positive");
  }
  virtual ~Objective() = default;

  Eigen::Index dim() const { return dim_; }
  virtual std::string name() const = 0;

  double value(const Eigen::Ref<const Vector>& w) const {
    require_dim(w, dim_, name().c_str());
    return do_value(w);
  }
  Vector gradient(const Eigen::Ref<const Vector>& w) const {
    require_dim(w, dim_, name().c_str());
    return do_gradient(w);
  }

  virtual std::optional<OptimumHint> optimum() const { return std::nullopt; }
  /// Euclidean strong-convexity modulus lambda, if known.
  virtual std::optional<double> strong_convexity() const { return std::nullopt; }
  /// Euclidean smoothness constant gamma, if known.
  virtual std::optional<double> smoothness() const { return std::nullopt; }

 protected:
  virtual double do_value(const Eigen::Ref<const Vector>& w) const = 0;
  virtual Vector do_gradient(const Eigen::Ref<const Vector>& w) const = 0;

 private:
  Eigen::Index dim_;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

/**
 * F(w) = E_z f(w, z) over a finite pool of samples z = 0..m-1 drawn
 * uniformly. Sample streams are a pure function of (seed, counter).
 */
class StochasticObjective : public Objective {
 public:
  using Objective::Objective;

  virtual Eigen::Index sample_count() const = 0;
  Vector sample_gradient(const Eigen::Ref<const Vector>& w, Eigen::Index z) const {
    require_dim(w, dim(), name().c_str());
    if (z < 0 || z >= sample_count()) throw InvalidArgument("sample index out of range");
    return do_sample_gradient(w, z);
  }

  /// The z drawn at position `counter` of the stream keyed by `seed`.
  Eigen::Index sample_index(std::uint64_t seed, std::uint64_t counter) const {
    return static_cast<Eigen::Index>(mix(seed, counter) % static_cast<std::uint64_t>(sample_count()));
  }

 protected:
  virtual Vector do_sample_gradient(const Eigen::Ref<const Vector>& w, Eigen::Index z) const = 0;

 private:
  // splitmix64 finalizer over the (seed, counter) pair.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (counter + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }
};

using StochasticObjectivePtr = std::shared_ptr<const StochasticObjective>;

/// F(w) = w^T Q w / 2 - b^T w with Q SPD.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(Matrix q, Vector b) : Objective(q.rows()), q_(std::move(q)), b_(std::move(b)) {
    if (!is_spd(q_)) throw InvalidArgument("quadratic: Q must be symmetric positive definite");
    require_dim(b_, q_.rows(), "quadratic b");
    Eigen::SelfAdjointEigenSolver<Matrix> es(q_, Eigen::EigenvaluesOnly);
    lambda_ = es.eigenvalues()(0);
    gamma_ = es.eigenvalues()(es.eigenvalues().size() - 1);
    Eigen::LLT<Matrix> llt(q_);
    w_star_ = llt.solve(b_);
  }

  std::string name() const override { return "quadratic"; }
  std::optional<OptimumHint> optimum() const override { return OptimumHint{w_star_, -0.5 * b_.dot(w_star_)}; }
  std::optional<double> strong_convexity() const override { return lambda_; }
  std::optional<double> smoothness() const override { return gamma_; }

 protected:
  double do_value(const Eigen::Ref<const Vector>& w) const override { return 0.5 * w.dot(q_ * w) - b_.dot(w); }
  Vector do_gradient(const Eigen::Ref<const Vector>& w) const override { return q_ * w - b_; }

 private:
  Matrix q_;
  Vector b_;
  Vector w_star_;
  double lambda_ = 0.0;
  double gamma_ = 0.0;
};

/// F(w) = |A w - b|^2.
class LeastSquaresObjective : public StochasticObjective {
 public:
  LeastSquaresObjective(Matrix a, Vector b) : StochasticObjective(a.cols()), a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() < 1) throw InvalidArgument("least_squares: A needs at least one row");
    require_dim(b_, a_.rows(), "least_squares b");
    const Matrix gram = a_.transpose() * a_;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
    gamma_ = 2.0 * hi;
    lambda_ = lo > 1e-12 * hi ? 2.0 * lo : 0.0;
    w_star_ = a_.completeOrthogonalDecomposition().solve(b_);
    f_star_ = (a_ * w_star_ - b_).squaredNorm();
  }

  std::string name() const override { return "least_squares"; }
  std::optional<OptimumHint> optimum() const override { return OptimumHint{w_star_, f_star_}; }
  std::optional<double> strong_convexity() const override {
    return lambda_ > 0 ? std::optional<double>(lambda_) : std::nullopt;
  }
  std::optional<double> smoothness() const override { return gamma_; }

  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }
  Eigen::Index sample_count() const override { return a_.rows(); }

 protected:
  double do_value(const Eigen::Ref<const Vector>& w) const override { return (a_ * w - b_).squaredNorm(); }
  Vector do_gradient(const Eigen::Ref<const Vector>& w) const override {
    return 2.0 * a_.transpose() * (a_ * w - b_);
  }
  // f(w, i) = m (a_i^T w - b_i)^2, so the uniform mean over i is F.
  Vector do_sample_gradient(const Eigen::Ref<const Vector>& w, Eigen::Index i) const override {
    const double m = static_cast<double>(a_.rows());
    return (2.0 * m * (a_.row(i).dot(w) - b_(i))) * a_.row(i).transpose();
  }

 private:
  Matrix a_;
  Vector b_;
  Vector w_star_;
  double f_star_ = 0.0;
  double lambda_ = 0.0;
  double gamma_ = 0.0;
};

/// Same function as least_squares; registered separately so configs can ask for the sampled form.
class LeastSquaresStochasticObjective final : public LeastSquaresObjective {
 public:
  using LeastSquaresObjective::LeastSquaresObjective;
  std::string name() const override { return "least_squares_stochastic"; }
};

/**
 * F(W) = sum_i (<A_i, W> - y_i)^2 over symmetric W, evaluated on the
 * symmetric vectorization (the same coordinates the Lyapunov metric uses).
 */
class MatrixSensingObjective final : public Objective {
 public:
  MatrixSensingObjective(const std::vector<Matrix>& sensing, Vector y)
      : Objective(sym_vec_size(side_of(sensing))), y_(std::move(y)) {
    require_dim(y_, static_cast<Eigen::Index>(sensing.size()), "matrix_sensing y");
    ops_.resize(static_cast<Eigen::Index>(sensing.size()), dim());
    for (std::size_t i = 0; i < sensing.size(); ++i) {
      if (sensing[i].rows() != sensing[0].rows() || sensing[i].cols() != sensing[0].rows()) {
        throw InvalidArgument("matrix_sensing: all A_i must be square of equal size");
      }
      ops_.row(static_cast<Eigen::Index>(i)) = sym_vec(sensing[i]).transpose();
    }
  }

  std::string name() const override { return "matrix_sensing"; }
  Eigen::Index side() const { return sym_side_from_size(dim()); }

 protected:
  double do_value(const Eigen::Ref<const Vector>& w) const override { return (ops_ * w - y_).squaredNorm(); }
  Vector do_gradient(const Eigen::Ref<const Vector>& w) const override {
    return 2.0 * ops_.transpose() * (ops_ * w - y_);
  }

 private:
  static Eigen::Index side_of(const std::vector<Matrix>& sensing) {
    if (sensing.empty()) throw InvalidArgument("matrix_sensing: need at least one sensing matrix");
    return sensing[0].rows();
  }
  Matrix ops_;
  Vector y_;
};

/// F(w) = <c, w>.
class LinearObjective final : public Objective {
 public:
  explicit LinearObjective(Vector c) : Objective(c.size()), c_(std::move(c)) {}
  std::string name() const override { return "linear"; }

 protected:
  double do_value(const Eigen::Ref<const Vector>& w) const override { return c_.dot(w); }
  Vector do_gradient(const Eigen::Ref<const Vector>&) const override { return c_; }

 private:
  Vector c_;
};

inline const std::vector<std::string>& builtin_objective_names() {
  static const std::vector<std::string> names{"quadratic", "least_squares", "least_squares_stochastic",
                                              "matrix_sensing"};
  return names;
}

/**
 * quadratic: Q, b.  least_squares / least_squares_stochastic: A, b.
 * matrix_sensing: sensing (list of matrices), y.
 */
inline ObjectivePtr make_builtin_objective(const std::string& name, const Params& params) {
  if (name == "quadratic") return std::make_shared<QuadraticObjective>(params.matrix("Q"), params.vector("b"));
  if (name == "least_squares") return std::make_shared<LeastSquaresObjective>(params.matrix("A"), params.vector("b"));
  if (name == "least_squares_stochastic") {
    return std::make_shared<LeastSquaresStochasticObjective>(params.matrix("A"), params.vector("b"));
  }
  if (name == "matrix_sensing") {
    return std::make_shared<MatrixSensingObjective>(params.matrices("sensing"), params.vector("y"));
  }
  throw InvalidArgument("unknown objective '" + name + "'");
}

/// max_i |central difference_i - grad_i| / (1 + |grad_i|) at step eps.
inline double gradient_check(const Objective& obj, const Eigen::Ref<const Vector>& w, double eps = 1e-5) {
  const Vector g = obj.gradient(w);
  double worst = 0.0;
  Vector probe = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    probe(i) = w(i) + eps;
    const double fp = obj.value(probe);
    probe(i) = w(i) - eps;
    const double fm = obj.value(probe);
    probe(i) = w(i);
    const double fd = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, std::abs(fd - g(i)) / (1.0 + std::abs(g(i))));
  }
  return worst;
}

}  // namespace mirrorless
