#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kwave/wave_geometry.hpp"

namespace kwave {

/// Tensor-product grid "t=1:3:20,x=1:3:20" (name=lo:hi:count, or name=value); last axis varies fastest.
struct Grid {
  std::vector<std::string> names;
  std::vector<std::vector<double>> axes;

  static Grid parse(std::string_view spec);
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  /// Coordinates of point `index` in the order of `names`.
  std::vector<double> point(std::size_t index) const;
  /// Number of points along the last axis (one grid row).
  std::size_t row_length() const { return axes.empty() ? 0 : axes.back().size(); }
  std::string str() const;
};

/// u = f(tau) with tangent planes spanned by the gamma frame.
struct HodographSurface {
  std::vector<std::string> parameters;
  std::vector<std::string> dependent;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
  /// q x k derivative of f.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> df;
  std::optional<ExprVec> symbolic;
  Eigen::VectorXd base_tau;
  Eigen::VectorXd u0;
  Box tau_box;
  /// "ansatz", "characteristic" or "flow".
  std::string provenance;
  std::vector<ExprVec> gammas;
  ExprMat mu;
  /// Largest flow-order swap mismatch seen while checking the surface.
  double swap_mismatch = 0.0;
  /// Largest |df/dtau - mu gamma(f)| at check points.
  double tangency_defect = 0.0;

  std::size_t k() const { return parameters.size(); }
};

struct CharacteristicOptions {
  /// Table spacing in s.
  double step = 1e-2;
  /// Local error tolerance of the RK4 halving estimate.
  double tolerance = 1e-12;
  /// Smallest substep before StiffnessAbort.
  double min_step = 1e-10;
  /// Dependent-variable box; leaving it raises BlowUp (empty: unchecked).
  Box u_box;
};

/// du/ds = alpha(s) gamma(u) from u0 at s_base over [s_lo, s_hi]; tabulated and Hermite-interpolated.
HodographSurface integrate_characteristic(const VarSpace& space, const Point& parameters, const ExprVec& gamma,
                                          const Expr& alpha, const std::string& s_name,
                                          const Eigen::VectorXd& u0, double s_base, double s_lo, double s_hi,
                                          const CharacteristicOptions& opt = {});

struct HodographOptions {
  double step = 1e-2;
  /// Accepted flow-order swap mismatch.
  double swap_tolerance = 1e-7;
  /// Tangency tolerance for a supplied ansatz.
  double ansatz_tolerance = 1e-9;
  int swap_samples = 10;
  std::uint64_t seed = 20240601;
  Box u_box;
};

/// Solves df/dtau^a = sum_b mu^b_a gamma_b(f) with f(base) = u0. With an ansatz the expression is
/// verified instead of integrated. Throws NonIntegrable when flow orders disagree.
HodographSurface build_hodograph(const QuasilinearSystem& sys, const std::vector<ExprVec>& gammas, const ExprMat& mu,
                                 const std::vector<std::string>& parameters, const Eigen::VectorXd& base_tau,
                                 const Eigen::VectorXd& u0, const Box& tau_box,
                                 const std::optional<ExprVec>& ansatz = std::nullopt,
                                 const HodographOptions& opt = {});

/// phi(x, u) with its u-gradient.
struct ImplicitPotential {
  std::function<double(std::span<const double> x, const Eigen::VectorXd& u)> value;
  std::function<Eigen::VectorXd(std::span<const double> x, const Eigen::VectorXd& u)> grad_u;
  std::optional<Expr> symbolic;
};

/// Compiles a symbolic potential over the system's variables (parameters pinned to their values).
ImplicitPotential make_potential(const QuasilinearSystem& sys, const Expr& phi);
/// Wraps a numeric potential; the u-gradient uses central differences with step h.
ImplicitPotential make_potential(const QuasilinearSystem& sys, const Potential& p, double h = 1e-6);

enum class GuessPolicy { Base, Explicit };

struct ImplicitSolveConfig {
  double tolerance = 1e-12;
  int max_iterations = 100;
  GuessPolicy guess = GuessPolicy::Base;
  Eigen::VectorXd initial;
  /// Continue from the previous converged point of the row when a cold start fails.
  bool warm_start = true;
  /// Prefer the warm start over the cold start.
  bool warm_first = false;
  double catastrophe_threshold = 1e-8;
};

enum class PointStatus { Converged, Catastrophe, Diverged };

const char* to_string(PointStatus s);

struct SolutionPoint {
  std::vector<double> x;
  Eigen::VectorXd tau;
  Eigen::VectorXd u;
  int iterations = 0;
  double det = 0.0;
  double newton_residual = 0.0;
  double pde_residual = std::numeric_limits<double>::quiet_NaN();
  PointStatus status = PointStatus::Diverged;
  bool regular() const { return status == PointStatus::Converged; }
};

struct SolutionField {
  std::vector<std::string> independent;
  std::vector<std::string> dependent;
  std::vector<std::string> parameters;
  Grid grid;
  std::vector<SolutionPoint> points;
  double catastrophe_threshold = 1e-8;
  /// Re-solves at an arbitrary x from a starting tau; nullopt on divergence.
  std::function<std::optional<SolutionPoint>(const std::vector<double>&, const Eigen::VectorXd&)> resolve;

  std::size_t converged() const;
  /// Tab-separated export with a header row.
  void write_tsv(std::ostream& out) const;
};

class ImplicitSolver {
public:
  ImplicitSolver(const QuasilinearSystem& sys, HodographSurface surface, std::vector<ImplicitPotential> potentials,
                 ImplicitSolveConfig cfg);
  /// Newton on G(tau) = tau - phi(x, f(tau)) from the given start.
  SolutionPoint solve_from(const std::vector<double>& x, const Eigen::VectorXd& start) const;
  Eigen::VectorXd cold_start(const std::vector<double>& x) const;
  /// det(Id - phi_u f_tau) at (x, tau).
  double monitor(const std::vector<double>& x, const Eigen::VectorXd& tau) const;
  const HodographSurface& surface() const { return surface_; }

private:
  std::vector<std::string> x_names_;
  HodographSurface surface_;
  std::vector<ImplicitPotential> phi_;
  ImplicitSolveConfig cfg_;
};

/// Solves on every grid point (grid names must be the system's independent variables).
SolutionField solve_implicit(const QuasilinearSystem& sys, const HodographSurface& surface,
                             const std::vector<ImplicitPotential>& potentials, const Grid& grid,
                             const ImplicitSolveConfig& cfg = {});

struct CatastropheBracket {
  /// Coordinates of the scan line (all axes except the scanned one).
  Point line;
  double lo = 0.0;
  double hi = 0.0;
  /// "monitor" when |det| fell below the threshold, "sign" on a sign change, "breakdown" when the
  /// solution ceased to exist.
  std::string kind;
};

/// First loss of regularity along each line of the named axis.
std::vector<CatastropheBracket> locate_catastrophe(const SolutionField& field, const std::string& axis);

/// u = (-ln|y|, t) on the example2 fixture grid t, x in [1,3], y in [0.2,0.9] (20 points per axis).
SolutionField double_wave_fixture();

}  // namespace kwave
