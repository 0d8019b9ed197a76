#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kwave/domain.hpp"
#include "kwave/system.hpp"

namespace kwave {

/// Covector lambda (length p) and characteristic vector gamma (length q) in the kernel of sum_i lambda_i A^i.
struct WaveElement {
  std::string label;
  ExprVec lambda;
  ExprVec gamma;
  std::optional<Expr> potential;
};

struct GeometryOptions {
  ZeroTestOptions zero;
  /// Smallest singular value below which stacked vectors count as dependent.
  double independence_threshold = 1e-8;
  int independence_samples = 32;
};

/// A spanning vector of a kernel, symbolic when available.
struct KernelVector {
  std::optional<ExprVec> symbolic;
  std::function<Eigen::VectorXd(const Point&)> sample;
};

/// Vectors spanning ker(sum_i lambda_i A^i) over the domain.
std::vector<KernelVector> kernel_elements(const QuasilinearSystem& sys, const ExprVec& lambda, const Box& domain,
                                          const GeometryOptions& opt = {});

/// Entry-wise zero test of (sum_i lambda_i A^i) gamma.
ZeroTest wave_relation(const QuasilinearSystem& sys, const ExprVec& lambda, const ExprVec& gamma, const Box& domain,
                       const ZeroTestOptions& opt = {});

/// Determinant by cofactor expansion (intended for small matrices).
Expr determinant(const ExprMat& m);

/// [a, b]^k = a^j d_j b^k - b^j d_j a^k over the variables `wrt`.
ExprVec lie_bracket(const ExprVec& a, const ExprVec& b, const std::vector<std::string>& wrt);

/// Directional derivative of every component of `v` along `field`.
ExprVec derivative_along(const ExprVec& v, const ExprVec& field, const std::vector<std::string>& wrt);

struct BracketDecomposition {
  /// Frame coefficients; empty when only numeric values were available.
  ExprVec coefficients;
  /// v - sum_s c^s frame_s (symbolic path only).
  ExprVec residual;
  bool symbolic = true;
  ZeroTest residual_test;
  /// Numeric path: coefficients at the sample points when not recognized as constants.
  std::vector<Eigen::VectorXd> sampled_coefficients;
  bool in_span() const { return residual_test.zero(); }
};

BracketDecomposition decompose_in_frame(const ExprVec& v, const std::vector<ExprVec>& frame, const Box& domain,
                                        const GeometryOptions& opt = {});

/// Fails with DegenerateFrame when the frame loses rank somewhere on the samples.
void require_independent(const std::vector<ExprVec>& vectors, const Box& domain, const GeometryOptions& opt,
                         const std::string& what);

enum class Verdict { Holds, Fails, Inconclusive };

const char* to_string(Verdict v);

struct ConditionVerdict {
  Verdict verdict = Verdict::Holds;
  double defect = 0.0;
  Point witness;
  std::string detail;
  int checks = 0;
};

struct ConditionReport {
  ConditionVerdict involutivity;
  ConditionVerdict cross_coefficients;
  ConditionVerdict lambda_profile;
  ConditionVerdict closedness;
  std::vector<std::string> labels;
  std::uint64_t seed = 0;
  int trials = 0;
  double threshold = 0.0;
  bool all_hold() const;
  Json to_json() const;
};

/// The four k-wave existence checks: frame involutivity, vanishing cross coefficients,
/// lambda profile wedge and closedness d_x lambda ^ lambda = 0.
ConditionReport check_kwave_conditions(const QuasilinearSystem& sys, const std::vector<WaveElement>& elements,
                                       const Box& domain, const GeometryOptions& opt = {});

/// Components (i<j<k) of d_x lambda ^ lambda.
ExprVec closedness_form(const ExprVec& lambda, const std::vector<std::string>& x);
/// Components (i<j) of d_x lambda.
ExprVec exterior_derivative(const ExprVec& lambda, const std::vector<std::string>& x);

struct Potential {
  /// phi with d_x phi = factor * lambda, when found in closed form.
  std::optional<Expr> symbolic;
  /// Always available: symbolic evaluation or a line integral from the basepoint.
  std::function<double(const Point&)> evaluate;
  Expr factor = Expr::rational(1);
  bool rescaled = false;
};

/// Potential of a closed covector (independent variables integrated, dependent ones frozen).
Potential find_potential(const QuasilinearSystem& sys, const WaveElement& element, const Point& basepoint,
                         const Box& domain, const GeometryOptions& opt = {});

/// Fields X^alpha_a = sum_{i,beta} A^{i alpha}_beta gamma^beta_a d/dx^i as [a][alpha][i].
std::vector<std::vector<ExprVec>> x_fields(const QuasilinearSystem& sys, const std::vector<ExprVec>& gammas);

/// Box with the system's parameter values pinned where the domain leaves them open.
Box analysis_box(const QuasilinearSystem& sys, const Box& domain);

}  // namespace kwave
