#include "kwave/linalg.hpp"

#include <limits>

namespace kwave {

RankInfo numerical_rank(const Eigen::MatrixXd& m, double gap_ratio) {
  RankInfo info;
  if (m.size() == 0) return info;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  info.singular_values = svd.singularValues();
  const auto& s = info.singular_values;
  const int n = static_cast<int>(s.size());
  if (s(0) == 0.0) {
    info.gap = std::numeric_limits<double>::infinity();
    return info;
  }
  for (int i = 0; i + 1 < n; ++i) {
    double ratio = s(i + 1) == 0.0 ? std::numeric_limits<double>::infinity() : s(i) / s(i + 1);
    if (ratio > gap_ratio) {
      info.rank = i + 1;
      info.gap = ratio;
      return info;
    }
  }
  info.rank = n;
  info.gap = std::numeric_limits<double>::infinity();
  return info;
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  double lo = s(s.size() - 1);
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / lo;
}

double smallest_singular_value(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& m, double gap_ratio) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  RankInfo info = numerical_rank(m, gap_ratio);
  const Eigen::Index n = m.cols();
  return svd.matrixV().rightCols(n - info.rank);
}

}  // namespace kwave
