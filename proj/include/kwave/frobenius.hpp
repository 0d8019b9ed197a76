#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kwave/wave_geometry.hpp"

namespace kwave {

/// [X_i, X_j] = h_i X_i + h_j X_j.
struct PairCoefficients {
  std::size_t i = 0;
  std::size_t j = 0;
  Expr h_i;
  Expr h_j;
};

/// Throws NotInSpan when the bracket leaves span{X_i, X_j}.
PairCoefficients pair_bracket_coefficients(const ExprVec& xi, const ExprVec& xj, const std::vector<std::string>& wrt,
                                           const Box& domain, const GeometryOptions& opt = {});

/// Tests d h_j / d chi_i = d h_i / d chi_j for all i < j.
ConditionVerdict compatibility_check(const ExprVec& h, const std::vector<std::string>& chi, const Box& domain,
                                     const ZeroTestOptions& opt = {});

/// Solves X(F) = g for a single field when X has one nonzero component or g vanishes.
std::optional<Expr> solve_along(const ExprVec& field, const Expr& g, const std::vector<std::string>& wrt,
                                const Box& domain, const ZeroTestOptions& opt = {});

enum class RescaleMethod { Auto, Symbolic, Grid };

struct RescaleOptions {
  GeometryOptions geometry;
  RescaleMethod method = RescaleMethod::Auto;
  /// Sample points for the commutation report.
  int samples = 100;
  /// Relative commutation tolerance for the grid path.
  double tolerance = 1e-6;
  /// Largest RK4 step along a flow leg.
  double step = 1e-2;
  double newton_tolerance = 1e-12;
  int max_newton = 40;
  /// Directional finite-difference step for factor derivatives.
  double fd_step = 1e-4;
};

struct ScalingFactor {
  std::optional<Expr> symbolic;
  std::function<double(const Point&)> evaluate;
};

struct PairResidual {
  std::size_t i = 0;
  std::size_t j = 0;
  double max_residual = 0.0;
  Point witness;
  bool ok = true;
};

struct FrameRescaling {
  std::vector<ExprVec> fields;
  std::vector<std::string> wrt;
  std::vector<PairCoefficients> coefficients;
  std::vector<ScalingFactor> factors;
  /// "identity", "symbolic" or "grid".
  std::string method;
  double tolerance = 0.0;
  std::vector<PairResidual> residuals;

  bool commuting() const;
  /// f_i X_i at a point (every slot of the domain must be assigned).
  Eigen::VectorXd rescaled_field(std::size_t i, const Point& at) const;
  /// Symbolic factors as strings; grid factors sampled on `per_axis` points per variable.
  Json to_json(const Box& domain, int per_axis = 3) const;
};

/// Rescales fields whose pairwise brackets stay in each pair's span so that they commute.
FrameRescaling rescale_frame(const std::vector<ExprVec>& fields, const std::vector<std::string>& wrt,
                             const Box& domain, const RescaleOptions& opt = {});

/// Commutator of f_i X_i and f_j X_j at a point from factor values and directional differences.
Eigen::VectorXd commutation_residual(const FrameRescaling& r, std::size_t i, std::size_t j, const Point& at,
                                     double fd_step);

}  // namespace kwave
