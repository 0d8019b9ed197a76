#include "kwave/frobenius.hpp"

#include <cmath>
#include <random>

#include "kwave/antiderivative.hpp"
#include "kwave/ode.hpp"

namespace kwave {

namespace {

Json point_json(const Point& p) {
  Json j = Json::object();
  for (const auto& [k, v] : p) j[k] = v;
  return j;
}

ExprVec scaled(const Expr& f, const ExprVec& v) {
  ExprVec out;
  for (const auto& e : v) out.push_back(f * e);
  return out;
}

Expr along(const ExprVec& field, const Expr& f, const std::vector<std::string>& wrt) {
  return derivative_along({f}, field, wrt)[0];
}

Eigen::VectorXd eval_vec(const ExprVec& v, const Point& p) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = evaluate(v[i], p);
  return out;
}

Point offset(Point p, const std::vector<std::string>& wrt, const Eigen::VectorXd& d) {
  for (std::size_t k = 0; k < wrt.size(); ++k) p[wrt[k]] += d(static_cast<Eigen::Index>(k));
  return p;
}

/// Staged closed-form construction; nullopt when a transport equation has no recognized solution.
std::optional<std::vector<Expr>> symbolic_factors(const std::vector<ExprVec>& x, const std::vector<std::string>& wrt,
                                                  const Box& box, const GeometryOptions& opt) {
  const std::size_t r = x.size();
  std::vector<ExprVec> z{x[0]};
  std::vector<Expr> f{Expr::rational(1)};
  auto vanishes = [&](const Expr& e) { return e.is_zero_constant() || is_zero(e, box, opt.zero).zero(); };
  for (std::size_t m = 1; m < r; ++m) {
    // Stage 1: Z_i(ln f_m) = -b_i where [Z_i, X_m] = a_i Z_i + b_i X_m.
    std::vector<Expr> b;
    for (std::size_t i = 0; i < m; ++i) b.push_back(pair_bracket_coefficients(z[i], x[m], wrt, box, opt).h_j);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = i + 1; k < m; ++k) {
        auto t = is_zero(along(z[i], b[k], wrt) - along(z[k], b[i], wrt), box, opt.zero);
        if (!t.zero())
          throw IncompatibleSystem("stage-one equations for field " + std::to_string(m + 1) +
                                       " are incompatible: defect " + std::to_string(t.value),
                                   t.witness);
      }
    Expr lnf = Expr::rational(0);
    for (std::size_t i = 0; i < m; ++i) {
      Expr rhs = reduce_on(-b[i] - along(z[i], lnf, wrt), box, opt.zero);
      if (vanishes(rhs)) continue;
      auto g = solve_along(z[i], rhs, wrt, box, opt.zero);
      if (!g) return std::nullopt;
      for (std::size_t k = 0; k < i; ++k)
        if (!vanishes(along(z[k], *g, wrt))) return std::nullopt;
      lnf = reduce_on(lnf + *g, box, opt.zero);
    }
    f.push_back(exp(lnf));
    z.push_back(scaled(f.back(), x[m]));
    // Stage 2: [Z_i, Z_m] = c_i Z_i, removed by Z_m(ln g_i) = c_i with g_i constant along the other Z_k.
    for (std::size_t i = 0; i < m; ++i) {
      auto pc = pair_bracket_coefficients(z[i], z[m], wrt, box, opt);
      if (!vanishes(pc.h_j)) return std::nullopt;
      if (vanishes(pc.h_i)) continue;
      auto g = solve_along(z[m], pc.h_i, wrt, box, opt.zero);
      if (!g) return std::nullopt;
      for (std::size_t k = 0; k < m; ++k)
        if (k != i && !vanishes(along(z[k], *g, wrt))) return std::nullopt;
      Expr gi = exp(*g);
      f[i] = reduce_on(gi * f[i], box, opt.zero);
      z[i] = scaled(gi, z[i]);
    }
  }
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i + 1; j < r; ++j)
      if (!all_zero(lie_bracket(scaled(f[i], x[i]), scaled(f[j], x[j]), wrt), box, opt.zero).zero())
        return std::nullopt;
  return f;
}

/// Numeric flow-box construction. chi_j is the flow time along X_j from a base transversal,
/// read off after flowing along the remaining fields; it is constant along X_i for i != j.
class Straightener {
public:
  Straightener(const std::vector<ExprVec>& x, const std::vector<std::string>& wrt, const Box& box,
               const RescaleOptions& opt)
      : layout_(box.layout()), center_(box.center()), n_(wrt.size()), r_(x.size()), opt_(opt) {
    for (const auto& name : wrt) slots_.push_back(layout_.index(name));
    for (const auto& field : x) {
      std::vector<CompiledExpr> f, d;
      for (const auto& c : field) {
        f.emplace_back(c, layout_);
        for (const auto& w : wrt) d.emplace_back(diff(c, w), layout_);
      }
      x_.push_back(std::move(f));
      dx_.push_back(std::move(d));
    }
    auto base = layout_.pack(center_);
    w0_.resize(static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k < n_; ++k) w0_(static_cast<Eigen::Index>(k)) = base[slots_[k]];
    Eigen::MatrixXd frame(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(r_));
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r_; ++i) {
      frame.col(static_cast<Eigen::Index>(i)) = field(i, base);
      smallest = std::min(smallest, frame.col(static_cast<Eigen::Index>(i)).norm());
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(frame, Eigen::ComputeFullU);
    transversal_ = svd.matrixU().rightCols(static_cast<Eigen::Index>(n_ - r_));
    double diag = 0.0;
    for (const auto& name : wrt) diag += std::pow(box[name].width(), 2);
    // Flow times stay below the half diagonal over the slowest field speed at the base point.
    double reach = 0.5 * std::sqrt(diag) / std::max(smallest, 1e-12);
    steps_ = std::min(step_count(reach, opt.step), 20000);
    last_.assign(r_, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_)));
    cache_.resize(r_);
  }

  double factor(std::size_t j, const Point& p) {
    Point full = center_;
    for (const auto& [k, v] : p) full[k] = v;
    auto slots = layout_.pack(full);
    if (cache_[j].first == slots) return cache_[j].second;
    Eigen::VectorXd target(static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k < n_; ++k) target(static_cast<Eigen::Index>(k)) = slots[slots_[k]];
    Eigen::MatrixXd jac;
    Eigen::VectorXd z;
    try {
      z = solve(j, target, slots, last_[j], jac);
    } catch (const StraighteningFailed&) {
      z = solve(j, target, slots, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_)), jac);
    }
    last_[j] = z;
    double d = jac.fullPivLu().solve(field(j, slots))(0);
    if (!std::isfinite(d) || std::abs(d) < 1e-12)
      throw StraighteningFailed("field " + std::to_string(j + 1) + " is tangent to its own level set at " +
                                format_point(p));
    cache_[j] = {slots, 1.0 / d};
    return 1.0 / d;
  }

private:
  Eigen::VectorXd field(std::size_t i, std::span<const double> slots) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k < n_; ++k) v(static_cast<Eigen::Index>(k)) = x_[i][k](slots);
    return v;
  }

  /// Flow of field i for time t from w, with the derivative of the end point in w.
  Eigen::VectorXd leg(std::size_t i, double t, const Eigen::VectorXd& w, std::vector<double>& slots,
                      Eigen::MatrixXd& phi) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::VectorXd y(n + n * n);
    y.head(n) = w;
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    y.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(id.data(), n * n);
    auto rhs = [&](double, const Eigen::VectorXd& s) {
      for (std::size_t k = 0; k < n_; ++k) slots[slots_[k]] = s(static_cast<Eigen::Index>(k));
      Eigen::VectorXd out(s.size());
      Eigen::MatrixXd d(n, n);
      for (std::size_t a = 0; a < n_; ++a) {
        out(static_cast<Eigen::Index>(a)) = x_[i][a](slots);
        for (std::size_t b = 0; b < n_; ++b)
          d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = dx_[i][a * n_ + b](slots);
      }
      Eigen::Map<const Eigen::MatrixXd> v(s.data() + n, n, n);
      Eigen::MatrixXd dv = d * v;
      out.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(dv.data(), n * n);
      return out;
    };
    y = rk4(rhs, y, 0.0, t, steps_);
    phi = Eigen::Map<const Eigen::MatrixXd>(y.data() + n, n, n);
    return y.head(n);
  }

  /// End point of the composed flows for unknowns z = (t_j, t_others..., eta) and its Jacobian.
  Eigen::VectorXd compose(std::size_t j, const Eigen::VectorXd& z, std::vector<double> slots,
                          Eigen::MatrixXd& jac) const {
    const auto n = static_cast<Eigen::Index>(n_);
    std::vector<std::size_t> order{j};
    for (std::size_t i = 0; i < r_; ++i)
      if (i != j) order.push_back(i);
    Eigen::VectorXd p = w0_ + transversal_ * z.tail(n - static_cast<Eigen::Index>(r_));
    std::vector<Eigen::MatrixXd> phis(r_);
    std::vector<Eigen::VectorXd> ends(r_);
    for (std::size_t l = 0; l < r_; ++l) {
      p = leg(order[l], z(static_cast<Eigen::Index>(l)), p, slots, phis[l]);
      for (std::size_t k = 0; k < n_; ++k) slots[slots_[k]] = p(static_cast<Eigen::Index>(k));
      ends[l] = field(order[l], slots);
    }
    jac.resize(n, n);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t l = r_; l-- > 0;) {
      jac.col(static_cast<Eigen::Index>(l)) = acc * ends[l];
      acc = acc * phis[l];
    }
    jac.rightCols(n - static_cast<Eigen::Index>(r_)) = acc * transversal_;
    return p;
  }

  Eigen::VectorXd solve(std::size_t j, const Eigen::VectorXd& target, const std::vector<double>& slots,
                        Eigen::VectorXd z, Eigen::MatrixXd& jac) const {
    const double tol = opt_.newton_tolerance * (1.0 + target.cwiseAbs().maxCoeff());
    try {
      Eigen::VectorXd res = target - compose(j, z, slots, jac);
      for (int it = 0; it < opt_.max_newton; ++it) {
        double norm = res.cwiseAbs().maxCoeff();
        if (norm <= tol) return z;
        Eigen::VectorXd dz = jac.fullPivLu().solve(res);
        double lambda = 1.0;
        bool improved = false;
        for (int half = 0; half < 12; ++half, lambda *= 0.5) {
          Eigen::MatrixXd trial_jac;
          Eigen::VectorXd trial = z + lambda * dz;
          Eigen::VectorXd trial_res = target - compose(j, trial, slots, trial_jac);
          if (trial_res.cwiseAbs().maxCoeff() < norm) {
            z = trial;
            res = trial_res;
            jac = trial_jac;
            improved = true;
            break;
          }
        }
        if (!improved) break;
      }
      if (res.cwiseAbs().maxCoeff() <= tol) return z;
    } catch (const EvalError& e) {
      throw StraighteningFailed(std::string("flow left the domain of the fields: ") + e.what());
    }
    throw StraighteningFailed("flow-box Newton iteration did not converge for field " + std::to_string(j + 1));
  }

  Layout layout_;
  Point center_;
  std::size_t n_, r_;
  RescaleOptions opt_;
  std::vector<std::size_t> slots_;
  std::vector<std::vector<CompiledExpr>> x_, dx_;
  Eigen::VectorXd w0_;
  Eigen::MatrixXd transversal_;
  int steps_ = 1;
  std::vector<Eigen::VectorXd> last_;
  std::vector<std::pair<std::vector<double>, double>> cache_;
};

}  // namespace

PairCoefficients pair_bracket_coefficients(const ExprVec& xi, const ExprVec& xj, const std::vector<std::string>& wrt,
                                           const Box& domain, const GeometryOptions& opt) {
  auto dec = decompose_in_frame(lie_bracket(xi, xj, wrt), {xi, xj}, domain, opt);
  if (!dec.in_span())
    throw NotInSpan("bracket leaves the span of the pair: residual " + std::to_string(dec.residual_test.value),
                    dec.residual_test.witness);
  return {0, 1, dec.coefficients[0], dec.coefficients[1]};
}

ConditionVerdict compatibility_check(const ExprVec& h, const std::vector<std::string>& chi, const Box& domain,
                                     const ZeroTestOptions& opt) {
  if (h.size() != chi.size()) throw Error("one coefficient per straightened coordinate is required");
  ConditionVerdict out;
  for (std::size_t i = 0; i < chi.size(); ++i)
    for (std::size_t j = i + 1; j < chi.size(); ++j) {
      ++out.checks;
      auto z = is_zero(diff(h[j], chi[i]) - diff(h[i], chi[j]), domain, opt);
      out.defect = std::max(out.defect, z.max_abs);
      if (!z.zero() && out.verdict == Verdict::Holds) {
        out.verdict = Verdict::Fails;
        out.defect = std::abs(z.value);
        out.witness = z.witness;
        out.detail = "d h_" + std::to_string(j + 1) + "/d " + chi[i] + " != d h_" + std::to_string(i + 1) + "/d " +
                     chi[j];
      }
    }
  return out;
}

std::optional<Expr> solve_along(const ExprVec& field, const Expr& g, const std::vector<std::string>& wrt,
                                const Box& domain, const ZeroTestOptions& opt) {
  if (g.is_zero_constant() || is_zero(g, domain, opt).zero()) return Expr::rational(0);
  std::optional<std::size_t> only;
  for (std::size_t k = 0; k < field.size(); ++k) {
    if (field[k].is_zero_constant() || is_zero(field[k], domain, opt).zero()) continue;
    if (only) return std::nullopt;
    only = k;
  }
  if (!only) return std::nullopt;
  auto f = antiderivative(reduce_on(g / field[*only], domain, opt), wrt[*only]);
  if (!f) return std::nullopt;
  if (!is_zero(along(field, *f, wrt) - g, domain, opt).zero()) return std::nullopt;
  return f;
}

bool FrameRescaling::commuting() const {
  for (const auto& r : residuals)
    if (!r.ok) return false;
  return true;
}

Eigen::VectorXd FrameRescaling::rescaled_field(std::size_t i, const Point& at) const {
  return factors[i].evaluate(at) * eval_vec(fields[i], at);
}

Eigen::VectorXd commutation_residual(const FrameRescaling& r, std::size_t i, std::size_t j, const Point& at,
                                     double fd_step) {
  if (r.factors[i].symbolic && r.factors[j].symbolic)
    return eval_vec(lie_bracket(scaled(*r.factors[i].symbolic, r.fields[i]),
                                scaled(*r.factors[j].symbolic, r.fields[j]), r.wrt),
                    at);
  Eigen::VectorXd xi = eval_vec(r.fields[i], at), xj = eval_vec(r.fields[j], at);
  auto directional = [&](std::size_t f, const Eigen::VectorXd& v) {
    double eps = fd_step / std::max(v.norm(), 1e-300);
    return (r.factors[f].evaluate(offset(at, r.wrt, eps * v)) - r.factors[f].evaluate(offset(at, r.wrt, -eps * v))) /
           (2 * eps);
  };
  double fi = r.factors[i].evaluate(at), fj = r.factors[j].evaluate(at);
  Eigen::VectorXd br = eval_vec(lie_bracket(r.fields[i], r.fields[j], r.wrt), at);
  return fi * directional(j, xi) * xj - fj * directional(i, xj) * xi + fi * fj * br;
}

FrameRescaling rescale_frame(const std::vector<ExprVec>& fields, const std::vector<std::string>& wrt,
                             const Box& domain, const RescaleOptions& opt) {
  const std::size_t r = fields.size();
  if (r == 0) throw Error("empty frame");
  for (const auto& f : fields)
    if (f.size() != wrt.size()) throw Error("field length does not match the variable block");
  require_independent(fields, domain, opt.geometry, "frame");

  FrameRescaling out;
  out.fields = fields;
  out.wrt = wrt;
  out.tolerance = opt.tolerance;
  bool commuting = true;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i + 1; j < r; ++j) {
      auto pc = pair_bracket_coefficients(fields[i], fields[j], wrt, domain, opt.geometry);
      pc.i = i;
      pc.j = j;
      commuting = commuting && pc.h_i.is_zero_constant() && pc.h_j.is_zero_constant();
      out.coefficients.push_back(std::move(pc));
    }

  auto symbolic = [&](std::vector<Expr> f) {
    for (auto& e : f) {
      ScalingFactor s;
      s.symbolic = e;
      auto code = std::make_shared<CompiledExpr>(e, domain.layout());
      auto layout = domain.layout();
      auto center = domain.center();
      s.evaluate = [code, layout, center](const Point& p) {
        Point full = center;
        for (const auto& [k, v] : p) full[k] = v;
        return (*code)(layout.pack(full));
      };
      out.factors.push_back(std::move(s));
    }
  };

  if (commuting) {
    out.method = "identity";
    symbolic(std::vector<Expr>(r, Expr::rational(1)));
  } else if (opt.method != RescaleMethod::Grid && r <= 3) {
    if (auto f = symbolic_factors(fields, wrt, domain, opt.geometry)) {
      out.method = "symbolic";
      symbolic(std::move(*f));
    } else if (opt.method == RescaleMethod::Symbolic) {
      throw StraighteningFailed("no closed-form rescaling found");
    }
  } else if (opt.method == RescaleMethod::Symbolic) {
    throw StraighteningFailed("closed-form rescaling supports at most three fields");
  }
  if (out.factors.empty()) {
    out.method = "grid";
    auto s = std::make_shared<Straightener>(fields, wrt, domain, opt);
    for (std::size_t j = 0; j < r; ++j) {
      ScalingFactor f;
      f.evaluate = [s, j](const Point& p) { return s->factor(j, p); };
      out.factors.push_back(std::move(f));
    }
  }

  std::mt19937_64 rng(opt.geometry.zero.seed);
  std::vector<Point> points;
  for (int k = 0; k < opt.samples; ++k) points.push_back(domain.sample(rng));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i + 1; j < r; ++j) {
      PairResidual pr;
      pr.i = i;
      pr.j = j;
      for (const auto& p : points) {
        for (std::size_t f : {i, j}) {
          double v = out.factors[f].evaluate(p);
          if (!std::isfinite(v) || std::abs(v) < 1e-12) throw StraighteningFailed("scaling factor vanishes at " + format_point(p));
        }
        double scale = std::max(1.0, out.rescaled_field(i, p).norm() * out.rescaled_field(j, p).norm());
        double res = commutation_residual(out, i, j, p, opt.fd_step).norm() / scale;
        if (res > pr.max_residual) {
          pr.max_residual = res;
          pr.witness = p;
        }
      }
      if (out.method == "grid") {
        pr.ok = pr.max_residual <= opt.tolerance;
      } else {
        auto z = all_zero(lie_bracket(scaled(*out.factors[i].symbolic, fields[i]),
                                      scaled(*out.factors[j].symbolic, fields[j]), wrt),
                          domain, opt.geometry.zero);
        pr.ok = z.zero();
        if (!z.zero()) pr.witness = z.witness;
      }
      out.residuals.push_back(std::move(pr));
    }
  return out;
}

Json FrameRescaling::to_json(const Box& domain, int per_axis) const {
  Json j = Json::object();
  j["schema"] = "kwave-rescaling/1";
  j["method"] = method;
  j["variables"] = wrt;
  Json fs = Json::array();
  for (const auto& f : fields) {
    Json c = Json::array();
    for (const auto& e : f) c.push_back(e.str());
    fs.push_back(c);
  }
  j["fields"] = fs;
  Json cs = Json::array();
  for (const auto& c : coefficients) cs.push_back({{"i", c.i}, {"j", c.j}, {"h_i", c.h_i.str()}, {"h_j", c.h_j.str()}});
  j["bracket_coefficients"] = cs;
  Json factors_json = Json::array();
  for (const auto& f : factors) {
    if (f.symbolic) {
      factors_json.push_back({{"expr", f.symbolic->str()}});
      continue;
    }
    Json axes = Json::array();
    std::size_t total = 1;
    for (const auto& name : wrt) {
      axes.push_back({{"name", name}, {"lo", domain[name].lo}, {"hi", domain[name].hi}, {"points", per_axis}});
      total *= static_cast<std::size_t>(per_axis);
    }
    Json values = Json::array();
    for (std::size_t idx = 0; idx < total; ++idx) {
      Point p = domain.center();
      std::size_t rest = idx;
      for (std::size_t k = wrt.size(); k-- > 0;) {
        std::size_t a = rest % static_cast<std::size_t>(per_axis);
        rest /= static_cast<std::size_t>(per_axis);
        const auto& iv = domain[wrt[k]];
        p[wrt[k]] = per_axis == 1 ? iv.mid() : iv.lo + iv.width() * static_cast<double>(a) / (per_axis - 1);
      }
      values.push_back(f.evaluate(p));
    }
    factors_json.push_back({{"grid", {{"axes", axes}, {"order", "row-major, last axis fastest"},
                                      {"interpolation", "multilinear"}, {"values", values}}}});
  }
  j["factors"] = factors_json;
  j["tolerance"] = tolerance;
  Json rs = Json::array();
  for (const auto& r : residuals) {
    Json e = {{"i", r.i}, {"j", r.j}, {"max_residual", r.max_residual}, {"ok", r.ok}};
    if (!r.witness.empty()) e["witness"] = point_json(r.witness);
    rs.push_back(e);
  }
  j["residuals"] = rs;
  j["commuting"] = commuting();
  return j;
}

}  // namespace kwave
