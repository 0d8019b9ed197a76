#include "kwave/verifier.hpp"

#include <cmath>
#include <random>

namespace kwave {

namespace {

Point point_of(const SolutionField& field, const std::vector<double>& x, const Eigen::VectorXd& u) {
  Point p;
  for (std::size_t i = 0; i < field.independent.size(); ++i) p[field.independent[i]] = x[i];
  for (std::size_t i = 0; i < field.dependent.size(); ++i) p[field.dependent[i]] = u(static_cast<Eigen::Index>(i));
  return p;
}

Eigen::MatrixXd central(const SolutionField& field, const std::vector<double>& x, const Eigen::VectorXd& tau,
                        double h) {
  const auto p = static_cast<Eigen::Index>(x.size());
  const auto q = static_cast<Eigen::Index>(field.dependent.size());
  Eigen::MatrixXd jac(q, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    auto xp = x, xm = x;
    xp[static_cast<std::size_t>(i)] += h;
    xm[static_cast<std::size_t>(i)] -= h;
    auto a = field.resolve(xp, tau);
    auto b = field.resolve(xm, tau);
    if (!a || !b) {
      Point w;
      for (std::size_t k = 0; k < x.size(); ++k) w[field.independent[k]] = (a ? xm : xp)[k];
      throw NeighborDiverged("re-solve failed next to the point", w);
    }
    jac.col(i) = (a->u - b->u) / (2 * h);
  }
  return jac;
}

/// lambda and gamma of every element evaluated at a point.
class ElementValues {
public:
  ElementValues(const QuasilinearSystem& sys, const std::vector<WaveElement>& elements)
      : layout_(sys.space().all()), params_(sys.parameter_values()) {
    for (const auto& e : elements) {
      std::vector<CompiledExpr> l, g;
      for (const auto& c : e.lambda) l.emplace_back(c, layout_);
      for (const auto& c : e.gamma) g.emplace_back(c, layout_);
      lambda_.push_back(std::move(l));
      gamma_.push_back(std::move(g));
    }
  }

  void at(const Point& pt, std::vector<Eigen::VectorXd>& lambdas, std::vector<Eigen::VectorXd>& gammas) const {
    Point full = params_;
    for (const auto& [k, v] : pt) full[k] = v;
    auto slots = layout_.pack(full);
    lambdas.clear();
    gammas.clear();
    for (std::size_t s = 0; s < lambda_.size(); ++s) {
      Eigen::VectorXd l(static_cast<Eigen::Index>(lambda_[s].size())), g(static_cast<Eigen::Index>(gamma_[s].size()));
      for (std::size_t i = 0; i < lambda_[s].size(); ++i) l(static_cast<Eigen::Index>(i)) = lambda_[s][i](slots);
      for (std::size_t i = 0; i < gamma_[s].size(); ++i) g(static_cast<Eigen::Index>(i)) = gamma_[s][i](slots);
      lambdas.push_back(std::move(l));
      gammas.push_back(std::move(g));
    }
  }

private:
  Layout layout_;
  Point params_;
  std::vector<std::vector<CompiledExpr>> lambda_, gamma_;
};

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Eigen::MatrixXd fd_jacobian_at(const SolutionField& field, const std::vector<double>& x, const Eigen::VectorXd& tau,
                               const FdOptions& opt) {
  if (!field.resolve) throw Error("solution field cannot be re-solved");
  if (!(opt.h > 0)) throw Error("FD step must be positive");
  Eigen::MatrixXd j = central(field, x, tau, opt.h);
  if (!opt.richardson) return j;
  Eigen::MatrixXd half = central(field, x, tau, opt.h / 2);
  return (4 * half - j) / 3;
}

Eigen::MatrixXd fd_jacobian(const SolutionField& field, std::size_t index, const FdOptions& opt) {
  if (index >= field.points.size()) throw Error("point index out of range");
  const auto& p = field.points[index];
  if (p.status == PointStatus::Diverged) throw Error("point " + std::to_string(index) + " did not converge");
  return fd_jacobian_at(field, p.x, p.tau, opt);
}

ResidualReport residual_report(const QuasilinearSystem& sys, SolutionField& field, const FdOptions& opt) {
  SystemEvaluator ev(sys);
  ResidualReport r;
  r.fd = opt;
  r.residuals.assign(field.points.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (std::size_t i = 0; i < field.points.size(); ++i) {
    auto& p = field.points[i];
    if (!p.regular()) {
      r.failures.push_back({i, to_string(p.status)});
      continue;
    }
    try {
      Eigen::MatrixXd jac = fd_jacobian(field, i, opt);
      std::vector<double> u(p.u.data(), p.u.data() + p.u.size());
      double res = ev.residual(ev.slots(p.x, u), jac).cwiseAbs().maxCoeff();
      p.pde_residual = res;
      r.residuals[i] = res;
      r.max = std::max(r.max, res);
      sum += res;
      ++r.evaluated;
    } catch (const NeighborDiverged& e) {
      r.failures.push_back({i, e.what()});
    } catch (const EvalError& e) {
      r.failures.push_back({i, e.what()});
    }
  }
  r.mean = r.evaluated ? sum / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

int numerical_rank(const Eigen::VectorXd& s, double gap) {
  if (s.size() == 0 || !(s(0) > 0)) return 0;
  for (Eigen::Index i = 0; i + 1 < s.size(); ++i)
    if (s(i + 1) == 0.0 || s(i) / s(i + 1) > gap) return static_cast<int>(i + 1);
  return static_cast<int>(s.size());
}

DecompositionRecovery recover_decomposition(const Eigen::MatrixXd& jac, const std::vector<Eigen::VectorXd>& gammas,
                                            const std::vector<Eigen::VectorXd>& lambdas, const RecoveryOptions& opt) {
  if (gammas.size() != lambdas.size()) throw Error("one gamma per lambda is required");
  const auto k = static_cast<Eigen::Index>(gammas.size());
  const Eigen::Index q = jac.rows(), p = jac.cols();
  Eigen::MatrixXd dyads(q * p, k);
  for (Eigen::Index s = 0; s < k; ++s) {
    const auto& g = gammas[static_cast<std::size_t>(s)];
    const auto& l = lambdas[static_cast<std::size_t>(s)];
    if (g.size() != q || l.size() != p) throw Error("element dimensions do not match the Jacobian");
    Eigen::MatrixXd d = g * l.transpose();
    dyads.col(s) = Eigen::Map<const Eigen::VectorXd>(d.data(), q * p);
  }
  DecompositionRecovery out;
  out.singular_values = Eigen::JacobiSVD<Eigen::MatrixXd>(jac).singularValues();
  out.rank = numerical_rank(out.singular_values, opt.rank_gap);
  if (k == 0) {
    out.xi = Eigen::VectorXd();
    out.error = jac.norm();
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dyads, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (!(sv(k - 1) > 1e-12 * std::max(1.0, sv(0)))) throw DegenerateElements("wave dyads are dependent", {});
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(jac.data(), q * p);
    out.xi = svd.solve(rhs);
    out.error = (dyads * out.xi - rhs).norm();
  }
  out.accepted = out.error <= opt.tolerance * std::max(1.0, jac.norm());
  return out;
}

DecompositionRecovery recover_decomposition(const QuasilinearSystem& sys, const Eigen::MatrixXd& jac,
                                            const std::vector<WaveElement>& elements, const Point& at,
                                            const RecoveryOptions& opt) {
  ElementValues values(sys, elements);
  std::vector<Eigen::VectorXd> l, g;
  values.at(at, l, g);
  try {
    return recover_decomposition(jac, g, l, opt);
  } catch (const DegenerateElements&) {
    throw DegenerateElements("wave dyads are dependent", at);
  }
}

ConditionVerdict constancy_along_kernel(const QuasilinearSystem& sys, const SolutionField& field,
                                        const std::vector<WaveElement>& elements,
                                        const std::vector<Eigen::VectorXd>& directions, const ConstancyOptions& opt) {
  ConditionVerdict v;
  const auto p = static_cast<Eigen::Index>(field.independent.size());
  for (const auto& d : directions)
    if (d.size() != p) throw Error("direction has wrong length");
  std::vector<std::size_t> regular;
  for (std::size_t i = 0; i < field.points.size(); ++i)
    if (field.points[i].regular()) regular.push_back(i);
  if (regular.empty()) {
    v.verdict = Verdict::Inconclusive;
    v.detail = "no regular points";
    return v;
  }
  ElementValues values(sys, elements);
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, regular.size() - 1);
  bool trivial = true;
  for (int n = 0; n < opt.samples; ++n) {
    const auto& pt = field.points[regular[pick(rng)]];
    std::vector<Eigen::VectorXd> basis = directions;
    if (basis.empty()) {
      std::vector<Eigen::VectorXd> l, g;
      values.at(point_of(field, pt.x, pt.u), l, g);
      Eigen::MatrixXd stack(static_cast<Eigen::Index>(l.size()), p);
      for (std::size_t s = 0; s < l.size(); ++s) stack.row(static_cast<Eigen::Index>(s)) = l[s].transpose();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack, Eigen::ComputeFullV);
      int rank = l.empty() ? 0 : numerical_rank(svd.singularValues(), 1e6);
      for (Eigen::Index c = rank; c < p; ++c) basis.push_back(svd.matrixV().col(c));
    }
    for (const auto& theta : basis) {
      trivial = false;
      Eigen::VectorXd dir = theta.normalized();
      auto xp = pt.x, xm = pt.x;
      for (Eigen::Index i = 0; i < p; ++i) {
        xp[static_cast<std::size_t>(i)] += opt.h * dir(i);
        xm[static_cast<std::size_t>(i)] -= opt.h * dir(i);
      }
      auto a = field.resolve(xp, pt.tau);
      auto b = field.resolve(xm, pt.tau);
      ++v.checks;
      if (!a || !b) {
        v.verdict = Verdict::Inconclusive;
        v.detail = "re-solve failed along a kernel direction";
        v.witness = point_of(field, pt.x, pt.u);
        return v;
      }
      double d = ((a->u - b->u) / (2 * opt.h)).cwiseAbs().maxCoeff();
      if (d > v.defect) {
        v.defect = d;
        v.witness = point_of(field, pt.x, pt.u);
      }
    }
  }
  if (trivial) {
    v.detail = "kernel of the stacked covectors is trivial";
    return v;
  }
  v.verdict = v.defect <= opt.tolerance ? Verdict::Holds : Verdict::Fails;
  v.detail = "max directional derivative of u along the kernel";
  return v;
}

FieldVerification verify_field(const QuasilinearSystem& sys, SolutionField& field,
                               const std::vector<WaveElement>& elements, const VerifyOptions& opt) {
  FieldVerification out;
  out.residuals = residual_report(sys, field, opt.fd);
  ElementValues values(sys, elements);
  out.min_rank = std::numeric_limits<int>::max();
  double deviation = 0.0;
  for (std::size_t i = 0; i < field.points.size(); ++i) {
    const auto& p = field.points[i];
    if (!p.regular() || std::isnan(p.pde_residual)) continue;
    Eigen::MatrixXd jac = fd_jacobian(field, i, opt.fd);
    std::vector<Eigen::VectorXd> l, g;
    values.at(point_of(field, p.x, p.u), l, g);
    auto rec = recover_decomposition(jac, g, l, opt.recovery);
    if (!rec.accepted) ++out.rejected;
    if (opt.expected_xi && rec.xi.size() == opt.expected_xi->size())
      deviation = std::max(deviation, (rec.xi - *opt.expected_xi).cwiseAbs().maxCoeff());
    out.min_rank = std::min(out.min_rank, rec.rank);
    out.max_rank = std::max(out.max_rank, rec.rank);
    out.recoveries.push_back(std::move(rec));
    out.recovered_at.push_back(i);
  }
  if (out.recoveries.empty()) out.min_rank = 0;
  if (opt.expected_xi) out.xi_deviation = deviation;
  out.constancy = constancy_along_kernel(sys, field, elements, {}, opt.constancy);
  return out;
}

Json FieldVerification::to_json(const SolutionField& field) const {
  Json j;
  j["schema"] = "kwave-residuals/1";
  j["fd_step"] = residuals.fd.h;
  j["richardson"] = residuals.fd.richardson;
  j["points"] = field.points.size();
  j["evaluated"] = residuals.evaluated;
  j["residual"] = {{"max", residuals.max}, {"mean", residuals.mean}};
  Json fails = Json::array();
  for (const auto& f : residuals.failures) fails.push_back({{"index", f.index}, {"reason", f.reason}});
  j["failures"] = fails;
  double xi_lo = std::numeric_limits<double>::infinity(), xi_hi = -xi_lo, err = 0.0;
  Json xi_min = Json::array(), xi_max = Json::array();
  if (!recoveries.empty()) {
    Eigen::VectorXd lo = recoveries[0].xi, hi = recoveries[0].xi;
    for (const auto& r : recoveries) {
      lo = lo.cwiseMin(r.xi);
      hi = hi.cwiseMax(r.xi);
      err = std::max(err, r.error);
    }
    for (Eigen::Index s = 0; s < lo.size(); ++s) {
      xi_min.push_back(lo(s));
      xi_max.push_back(hi(s));
      xi_lo = std::min(xi_lo, lo(s));
      xi_hi = std::max(xi_hi, hi(s));
    }
  }
  j["decomposition"] = {{"recovered", recoveries.size()},
                        {"rejected", rejected},
                        {"xi_min", xi_min},
                        {"xi_max", xi_max},
                        {"max_reconstruction_error", err},
                        {"xi_deviation", number(xi_deviation)},
                        {"rank_min", min_rank},
                        {"rank_max", max_rank}};
  j["constancy"] = {{"verdict", to_string(constancy.verdict)},
                    {"defect", constancy.defect},
                    {"checks", constancy.checks},
                    {"detail", constancy.detail}};
  Json per = Json::array();
  for (std::size_t i = 0; i < residuals.residuals.size(); ++i) per.push_back(number(residuals.residuals[i]));
  j["per_point"] = per;
  return j;
}

}  // namespace kwave
