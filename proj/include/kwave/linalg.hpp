#pragma once

#include <Eigen/Dense>

namespace kwave {

struct RankInfo {
  int rank = 0;
  Eigen::VectorXd singular_values;
  /// Ratio sigma_rank / sigma_{rank+1} at the cut (infinite when the tail is exactly zero).
  double gap = 0.0;
};

/// Rank from the first singular-value ratio exceeding `gap_ratio`.
RankInfo numerical_rank(const Eigen::MatrixXd& m, double gap_ratio = 1e6);

double condition_number(const Eigen::MatrixXd& m);

double smallest_singular_value(const Eigen::MatrixXd& m);

/// Orthonormal basis of the null space (columns), using the same gap rule.
Eigen::MatrixXd null_space(const Eigen::MatrixXd& m, double gap_ratio = 1e6);

}  // namespace kwave
