#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kwave/system.hpp"
#include "kwave/wave_geometry.hpp"
#include "kwave/wave_solver.hpp"

namespace kwave {

struct FdOptions {
  double h = 1e-5;
  /// Combines steps h and h/2 to cancel the leading error term.
  bool richardson = false;
};

/// Central-difference u_x (q x p) by re-solving at x +- h e_i from the point's tau.
Eigen::MatrixXd fd_jacobian(const SolutionField& field, std::size_t index, const FdOptions& opt = {});
Eigen::MatrixXd fd_jacobian_at(const SolutionField& field, const std::vector<double>& x, const Eigen::VectorXd& tau,
                               const FdOptions& opt = {});

struct ResidualFailure {
  std::size_t index = 0;
  std::string reason;
};

struct ResidualReport {
  /// Max-norm PDE residual per grid point; NaN where no value exists.
  std::vector<double> residuals;
  double max = 0.0;
  double mean = 0.0;
  std::size_t evaluated = 0;
  FdOptions fd;
  std::vector<ResidualFailure> failures;
};

/// Plugs FD Jacobians into the system at every regular point and stores them in the points' pde_residual.
ResidualReport residual_report(const QuasilinearSystem& sys, SolutionField& field, const FdOptions& opt = {});

struct RecoveryOptions {
  /// Accepted reconstruction error relative to max(1, |jac|_F).
  double tolerance = 1e-8;
  /// sigma_i / sigma_{i+1} above this marks the numerical rank.
  double rank_gap = 1e6;
};

struct DecompositionRecovery {
  Eigen::VectorXd xi;
  /// |jac - sum xi gamma (x) lambda|_F
  double error = 0.0;
  int rank = 0;
  Eigen::VectorXd singular_values;
  bool accepted = false;
};

/// Number of singular values before the first gap larger than `gap` (zeros count as a gap).
int numerical_rank(const Eigen::VectorXd& singular_values, double gap = 1e6);

/// Least-squares xi with jac ~ sum_s xi_s gamma_s lambda_s^T. Throws DegenerateElements when the dyads are dependent.
DecompositionRecovery recover_decomposition(const Eigen::MatrixXd& jac, const std::vector<Eigen::VectorXd>& gammas,
                                            const std::vector<Eigen::VectorXd>& lambdas,
                                            const RecoveryOptions& opt = {});
/// Same, with lambda and gamma evaluated from the elements at (x, u).
DecompositionRecovery recover_decomposition(const QuasilinearSystem& sys, const Eigen::MatrixXd& jac,
                                            const std::vector<WaveElement>& elements, const Point& at,
                                            const RecoveryOptions& opt = {});

struct ConstancyOptions {
  int samples = 50;
  std::uint64_t seed = 20240601;
  double h = 1e-5;
  double tolerance = 1e-6;
};

/// Directional FD derivative of u along directions annihilated by every lambda. Without explicit directions a
/// numeric kernel basis of the stacked lambdas is used at each sampled point.
ConditionVerdict constancy_along_kernel(const QuasilinearSystem& sys, const SolutionField& field,
                                        const std::vector<WaveElement>& elements,
                                        const std::vector<Eigen::VectorXd>& directions = {},
                                        const ConstancyOptions& opt = {});

struct FieldVerification {
  ResidualReport residuals;
  std::vector<DecompositionRecovery> recoveries;
  /// Index into the field for every recovery.
  std::vector<std::size_t> recovered_at;
  ConditionVerdict constancy;
  /// Largest |xi - expected| when an expectation was given; NaN otherwise.
  double xi_deviation = std::numeric_limits<double>::quiet_NaN();
  int min_rank = 0;
  int max_rank = 0;
  std::size_t rejected = 0;

  /// Schema "kwave-residuals/1".
  Json to_json(const SolutionField& field) const;
};

struct VerifyOptions {
  FdOptions fd;
  RecoveryOptions recovery;
  ConstancyOptions constancy;
  std::optional<Eigen::VectorXd> expected_xi;
};

/// Residuals, decomposition recovery at every regular point and the constancy check.
FieldVerification verify_field(const QuasilinearSystem& sys, SolutionField& field,
                               const std::vector<WaveElement>& elements, const VerifyOptions& opt = {});

}  // namespace kwave
