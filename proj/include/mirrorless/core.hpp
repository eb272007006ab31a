#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace mirrorless {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments: unknown names, out-of-range parameters, dimension mismatches.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A point (or an ODE path) left the region where a metric or potential is defined.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what, double exit_time = std::numeric_limits<double>::quiet_NaN())
      : Error(what), exit_time_(exit_time) {}

  /// Time at which an integrated path left the domain, NaN when not applicable.
  double exit_time() const noexcept { return exit_time_; }

 private:
  double exit_time_;
};

/// An iterative solver ran out of iterations / doublings.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }

/**
 * A parameter vector tagged with the chart (parametrization) it is expressed in.
 * Tangent vectors share the plain Vector representation.
 */
struct Point {
  Vector coords;
  std::string chart = "canonical";

  Point() = default;
  explicit Point(Vector c, std::string chart_name = "canonical")
      : coords(std::move(c)), chart(std::move(chart_name)) {
    if (!coords.allFinite()) throw InvalidArgument("Point coordinates must be finite");
    if (chart.empty()) throw InvalidArgument("Point chart identifier must be non-empty");
  }

  Eigen::Index dim() const { return coords.size(); }
};

inline void require_dim(const Eigen::Ref<const Vector>& v, Eigen::Index d, const char* what) {
  if (v.size() != d) {
    throw InvalidArgument(std::string(what) + ": expected length " + std::to_string(d) + ", got " +
                          std::to_string(v.size()));
  }
}

inline double sup_norm(const Eigen::Ref<const Vector>& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Symmetric n x n matrices <-> R^{n(n+1)/2}. Row-major upper triangle,
// off-diagonal entries scaled by sqrt(2) so the Frobenius inner product
// becomes the Euclidean one.

inline Eigen::Index sym_vec_size(Eigen::Index n) { return n * (n + 1) / 2; }

/// Inverse of sym_vec_size; throws if m is not a triangular number.
inline Eigen::Index sym_side_from_size(Eigen::Index m) {
  Eigen::Index n = 0;
  while (sym_vec_size(n) < m) ++n;
  if (sym_vec_size(n) != m) {
    throw InvalidArgument("length " + std::to_string(m) + " is not n(n+1)/2 for any n");
  }
  return n;
}

inline Vector sym_vec(const Eigen::Ref<const Matrix>& s) {
  const Eigen::Index n = s.rows();
  if (s.cols() != n) throw InvalidArgument("sym_vec: matrix must be square");
  Vector v(sym_vec_size(n));
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    v(idx++) = s(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) v(idx++) = M_SQRT2 * 0.5 * (s(i, j) + s(j, i));
  }
  return v;
}

inline Matrix sym_mat(const Eigen::Ref<const Vector>& v) {
  const Eigen::Index n = sym_side_from_size(v.size());
  Matrix s(n, n);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = v(idx++);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      s(i, j) = v(idx++) / M_SQRT2;
      s(j, i) = s(i, j);
    }
  }
  return s;
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Eigen::Ref<const Matrix>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const Eigen::Ref<const Matrix>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

inline bool is_spd(const Eigen::Ref<const Matrix>& m, double sym_tol = 1e-12) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) return false;
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace mirrorless
