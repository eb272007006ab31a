#pragma once

#include "mirrorless/core.hpp"

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace mirrorless {

/// Loosely typed key-value parameters for the builtin factories.
class Params {
 public:
  using Value = std::variant<double, std::string, Vector, Matrix, std::vector<Matrix>>;

  Params() = default;
  Params(std::initializer_list<std::pair<const std::string, Value>> init) : values_(init) {}

  Params& set(const std::string& key, Value v) {
    values_[key] = std::move(v);
    return *this;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  double number(const std::string& key) const { return get<double>(key, "a number"); }
  double number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  const std::string& text(const std::string& key) const { return get<std::string>(key, "a string"); }
  const Vector& vector(const std::string& key) const { return get<Vector>(key, "a vector"); }
  const Matrix& matrix(const std::string& key) const { return get<Matrix>(key, "a matrix"); }
  const std::vector<Matrix>& matrices(const std::string& key) const {
    return get<std::vector<Matrix>>(key, "a list of matrices");
  }

  /// Positive integer parameter stored as a number.
  Eigen::Index count(const std::string& key) const {
    const double x = number(key);
    if (x < 1 || x != std::floor(x)) throw InvalidArgument("parameter '" + key + "' must be a positive integer");
    return static_cast<Eigen::Index>(x);
  }

  const std::map<std::string, Value>& values() const { return values_; }

 private:
  template <class T>
  const T& get(const std::string& key, const char* kind) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw InvalidArgument("missing parameter '" + key + "'");
    if (const T* p = std::get_if<T>(&it->second)) return *p;
    throw InvalidArgument("parameter '" + key + "' must be " + kind);
  }

  std::map<std::string, Value> values_;
};

}  // namespace mirrorless
