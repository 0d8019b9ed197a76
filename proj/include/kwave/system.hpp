#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kwave/domain.hpp"
#include "kwave/expr.hpp"

namespace kwave {

using Json = nlohmann::json;

/// Sum_i A^i(x,u) du/dx^i = b(x,u) with A^i of shape m x q.
class QuasilinearSystem {
public:
  using TextMatrix = std::vector<std::vector<std::string>>;

  QuasilinearSystem() = default;
  /// Builds from entry strings; the strings are kept verbatim for serialization.
  QuasilinearSystem(VarSpace space, std::vector<TextMatrix> a_text, std::vector<std::string> b_text);
  static QuasilinearSystem from_exprs(VarSpace space, std::vector<ExprMat> a, ExprVec b);

  const VarSpace& space() const { return space_; }
  std::size_t p() const { return space_.independent().size(); }
  std::size_t q() const { return space_.dependent().size(); }
  std::size_t m() const { return b_.size(); }
  bool properly_determined() const { return m() == q(); }

  const ExprMat& A(std::size_t i) const { return a_[i]; }
  const std::vector<ExprMat>& A() const { return a_; }
  const ExprVec& b() const { return b_; }
  const std::vector<TextMatrix>& a_text() const { return a_text_; }
  const std::vector<std::string>& b_text() const { return b_text_; }

  /// Parameter values used when evaluating; every parameter needs one.
  const Point& parameter_values() const { return params_; }
  void set_parameter(const std::string& name, double value);

  /// Sum_i lambda_i A^i as an m x q matrix of expressions.
  ExprMat symbol(const ExprVec& lambda) const;

  /// The index of the independent variable whose A is the identity, if any.
  std::optional<std::size_t> evolutionary_index() const;
  bool source_is_zero() const;

  std::string name;

private:
  void validate() const;
  void fill_text();

  VarSpace space_;
  std::vector<ExprMat> a_;
  ExprVec b_;
  std::vector<TextMatrix> a_text_;
  std::vector<std::string> b_text_;
  Point params_;
};

struct SystemFile {
  QuasilinearSystem system;
  Json analysis;  // optional section, kept as given
};

Json system_to_json(const QuasilinearSystem& sys);
QuasilinearSystem system_from_json(const Json& j);
SystemFile parse_system_file(const std::string& text);
SystemFile load_system_file(const std::string& path);
std::string dump_system(const QuasilinearSystem& sys, const Json& analysis = Json());

/// Compiled numeric view of a system over the slot layout (independent, dependent, parameters).
class SystemEvaluator {
public:
  explicit SystemEvaluator(const QuasilinearSystem& sys);
  const Layout& layout() const { return layout_; }
  const QuasilinearSystem& system() const { return *sys_; }

  std::vector<double> slots(std::span<const double> x, std::span<const double> u) const;
  std::vector<double> slots(const Point& pt) const;
  Eigen::MatrixXd A(std::size_t i, std::span<const double> slots) const;
  Eigen::VectorXd b(std::span<const double> slots) const;
  /// Sum_i A^i J e_i - b, J is q x p.
  Eigen::VectorXd residual(std::span<const double> slots, const Eigen::MatrixXd& jac) const;
  /// Largest absolute coefficient among A and b at the point.
  double coefficient_scale(std::span<const double> slots) const;

private:
  double eval(const CompiledExpr& c, std::span<const double> slots, const std::string& entry) const;

  const QuasilinearSystem* sys_;
  Layout layout_;
  std::vector<std::vector<std::vector<CompiledExpr>>> a_;
  std::vector<CompiledExpr> b_;
  std::vector<double> param_slots_;
};

/// Residual of the system for a jet (x, u, du/dx); J is q x p.
Eigen::VectorXd residual(const QuasilinearSystem& sys, const Point& x, std::span<const double> u,
                         const Eigen::MatrixXd& jac);

struct HomogenizeOptions {
  std::optional<std::string> new_variable;
};

struct HomogenizationResult {
  QuasilinearSystem system;
  ExprMat M;
  std::string new_variable;
  std::string shifted_variable;
  /// True when the input already had b == 0; the system is returned unchanged with M = Id.
  bool all_sources_zero = false;
};

constexpr const char* kHomogenizeSuffix = "_h";

/// Rescales by M and shifts u^1 -> u^1 + s so that the system becomes homogeneous.
HomogenizationResult homogenize(const QuasilinearSystem& sys, const Box& domain, const HomogenizeOptions& opt = {});

struct RowPermutation {
  QuasilinearSystem system;
  std::vector<std::size_t> order;  // order[i] = original row placed at i
};

/// Moves the first equation with a source not identically zero to the top.
RowPermutation permute_sources_first(const QuasilinearSystem& sys, const Box& domain);

/// Entry-wise zero test of M b - e_1 on the domain.
ZeroTest check_normalization(const QuasilinearSystem& original, const HomogenizationResult& h, const Box& domain,
                             const ZeroTestOptions& opt = {});

struct Jet {
  std::vector<double> x;
  std::vector<double> u;
  Eigen::MatrixXd jac;  // q x p
};

/// Minimum-norm change of the jacobian that zeroes the residual.
Jet project_jet(const SystemEvaluator& ev, Jet jet);

/// Maps a jet of the input to the homogenized system at the given value of the new variable.
Jet transport_jet(const Jet& jet, double s);

struct ReverseCheck {
  bool independent = true;
  double max_variation = 0.0;
  Point witness;
};

/// Tests whether v(x, s) + s e_1 is independent of s for a solution v of the homogenized system.
ReverseCheck check_reverse(const HomogenizationResult& h,
                           const std::function<std::vector<double>(const Point&)>& homogeneous_solution,
                           const Box& domain, int samples = 20, std::uint64_t seed = 7, double tol = 1e-8);

/// gamma_1 solving (A_1 lambda) gamma_1 = b - (A_2 lambda) gamma_2 where the first `q_h`
/// components of gamma are unknown.
Eigen::VectorXd split_simple_element(const QuasilinearSystem& sys, const ExprVec& lambda, std::size_t q_h,
                                     const Eigen::VectorXd& gamma2, const Point& at);

}  // namespace kwave
