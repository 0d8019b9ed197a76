#pragma once

#include <cmath>

#include "kwave/fixtures.hpp"
#include "kwave/wave_solver.hpp"

namespace kwave::testing_support {

inline ExprVec exprs(const std::vector<std::string>& text, const VarSpace& space) {
  ExprVec out;
  for (const auto& s : text) out.push_back(parse(s, space));
  return out;
}

/// Scalar wave with c = m = k = 1: u = f(s) = s and phi = -t(u + u^2) + ln x + ln y.
struct Example3 {
  QuasilinearSystem sys = load_fixture("example3").system;
  HodographSurface surface;
  std::vector<ImplicitPotential> phi;

  Example3() {
    const auto& sp = sys.space();
    surface = integrate_characteristic(sp, sys.parameter_values(), exprs({"c"}, sp), Expr::rational(1), "s",
                                       Eigen::VectorXd::Zero(1), 0.0, -16.0, 3.0, {1e-3});
    phi = {make_potential(sys, parse("-t*(m*u + k*u^2) + m*ln(x) + k*ln(y)", sp))};
  }
};

/// Left root of u + t (u + u^2) = ln(xy).
inline double example3_left_root(double t, double x, double y) {
  const double D = (1 + t) * (1 + t) + 4 * t * std::log(x * y);
  return -(std::sqrt(D) + t + 1) / (2 * t);
}

}  // namespace kwave::testing_support
