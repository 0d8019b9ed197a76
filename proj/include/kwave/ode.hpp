#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace kwave {

/// Classical RK4 with `steps` equal steps from t0 to t1; rhs(t, y) returns dy/dt.
template <class Rhs>
Eigen::VectorXd rk4(Rhs&& rhs, Eigen::VectorXd y, double t0, double t1, int steps) {
  const double h = (t1 - t0) / steps;
  double t = t0;
  for (int i = 0; i < steps; ++i) {
    Eigen::VectorXd k1 = rhs(t, y);
    Eigen::VectorXd k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    Eigen::VectorXd k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    Eigen::VectorXd k4 = rhs(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = t0 + (i + 1) * h;
  }
  return y;
}

/// Step count giving steps of at most `step` over an interval of length `length`.
inline int step_count(double length, double step) {
  return std::max(1, static_cast<int>(std::ceil(std::abs(length) / step - 1e-12)));
}

}  // namespace kwave
