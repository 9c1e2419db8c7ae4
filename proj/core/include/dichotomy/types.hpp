#pragma once

#include <Eigen/Dense>

namespace dichotomy {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Max norm on a product X ⊕ Y given the two coordinate blocks.
inline double max_norm(const Vec& x, const Vec& y) {
  const double nx = x.size() ? x.norm() : 0.0;
  const double ny = y.size() ? y.norm() : 0.0;
  return nx > ny ? nx : ny;
}

}  // namespace dichotomy
