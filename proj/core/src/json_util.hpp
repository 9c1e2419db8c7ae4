#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "dichotomy/error.hpp"
#include "dichotomy/types.hpp"
#include "json.hpp"

namespace dichotomy::detail {

using json = nlohmann::json;

/// JSON has no infinities; they travel as the strings "inf" and "-inf".
inline json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

inline double real_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error(ErrorKind::ConfigInvalid, "not a real: " + s);
  }
  return j.get<double>();
}

inline json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

inline Mat mat_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
  if (!j.is_array()) throw Error(ErrorKind::ConfigInvalid, "matrix must be an array of arrays");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols)
      throw Error(ErrorKind::ConfigInvalid, "ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace dichotomy::detail
