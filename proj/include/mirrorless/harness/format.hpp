#pragma once

// Serialization helpers shared by the harness: shortest round-trip decimals,
// JSON <-> Eigen conversions and a minimal numeric CSV reader.

#include "mirrorless/core.hpp"
#include "mirrorless/integrators.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace mirrorless::harness {

using Json = nlohmann::ordered_json;

/// Shortest decimal that parses back to exactly `x`; "nan"/"inf"/"-inf" otherwise.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline Json to_json(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(to_json(v(i)));
  return out;
}

inline Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vector(m.row(i).transpose())));
  return out;
}

inline Json to_json(const std::vector<double>& xs) {
  Json out = Json::array();
  for (double x : xs) out.push_back(to_json(x));
  return out;
}

inline bool is_number_array(const Json& j) {
  if (!j.is_array()) return false;
  for (const auto& x : j)
    if (!x.is_number()) return false;
  return true;
}

inline bool is_number_matrix(const Json& j) {
  if (!j.is_array() || j.empty()) return false;
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  for (const auto& row : j)
    if (!is_number_array(row) || row.size() != cols || cols == 0) return false;
  return true;
}

inline Vector vector_from_json(const Json& j) {
  if (!is_number_array(j)) throw InvalidArgument("expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix matrix_from_json(const Json& j) {
  if (!is_number_matrix(j)) throw InvalidArgument("expected a non-empty rectangular array of number arrays");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.front().size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t k = 0; k < j[i].size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
  return m;
}

/// Comma-separated numbers, one row per line. A first line that does not parse is taken as a header.
inline Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open CSV file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      if (b == std::string::npos) {
        numeric = false;
        break;
      }
      double x = 0.0;
      const auto res = std::from_chars(cell.data() + b, cell.data() + e + 1, x);
      if (res.ec != std::errc() || res.ptr != cell.data() + e + 1) {
        numeric = false;
        break;
      }
      row.push_back(x);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw InvalidArgument("non-numeric row in CSV file '" + path + "': " + line);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidArgument("ragged rows in CSV file '" + path + "'");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgument("CSV file '" + path + "' has no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return m;
}

/// k, t, w_1..w_d, F, grad_norm, substeps.
inline std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "k,t";
  const Eigen::Index d = traj.points.empty() ? 0 : traj.points.front().size();
  for (Eigen::Index i = 1; i <= d; ++i) out += ",w_" + std::to_string(i);
  out += ",F,grad_norm,substeps\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out += std::to_string(k);
    out += ',' + format_double(traj.times[k]);
    for (Eigen::Index i = 0; i < d; ++i) out += ',' + format_double(traj.points[k](i));
    out += ',' + format_double(traj.meta[k].objective);
    out += ',' + format_double(traj.meta[k].grad_norm);
    out += ',' + std::to_string(traj.meta[k].substeps);
    out += '\n';
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mirrorless::harness
