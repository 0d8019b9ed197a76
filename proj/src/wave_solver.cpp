#include "kwave/wave_solver.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "kwave/fixtures.hpp"
#include "kwave/ode.hpp"

namespace kwave {

namespace {

double parse_number(std::string_view s, std::string_view what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw SyntaxError("bad number '" + std::string(s) + "' in " + std::string(what), 0);
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

Point witness_point(const std::vector<std::string>& names, const Eigen::VectorXd& v, Point extra = {}) {
  for (std::size_t i = 0; i < names.size(); ++i) extra[names[i]] = v(static_cast<Eigen::Index>(i));
  return extra;
}

/// Cubic Hermite table over an increasing abscissa.
struct HermiteTable {
  std::vector<double> s;
  std::vector<Eigen::VectorXd> u, du;

  Eigen::VectorXd operator()(double x) const {
    const double span = s.back() - s.front();
    if (x < s.front() - 1e-12 * (1 + span) || x > s.back() + 1e-12 * (1 + span))
      throw EvalError("parameter outside the integrated range");
    auto it = std::upper_bound(s.begin(), s.end(), x);
    std::size_t i = it == s.begin() ? 0 : static_cast<std::size_t>(it - s.begin()) - 1;
    if (i + 1 >= s.size()) i = s.size() - 2;
    const double h = s[i + 1] - s[i];
    const double t = (x - s[i]) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    return h00 * u[i] + h10 * h * du[i] + h01 * u[i + 1] + h11 * h * du[i + 1];
  }
};

void check_box(const Box& box, const std::vector<std::string>& names, const Eigen::VectorXd& u, double s,
               const std::string& s_name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double v = u(static_cast<Eigen::Index>(i));
    bool outside = !std::isfinite(v);
    if (!outside && box.contains(names[i])) {
      const auto& iv = box[names[i]];
      outside = v < iv.lo || v > iv.hi;
    }
    if (outside) throw BlowUp("trajectory left the dependent-variable box", witness_point(names, u, {{s_name, s}}));
  }
}

std::vector<CompiledExpr> compile_all(const ExprVec& v, const Layout& layout) {
  std::vector<CompiledExpr> out;
  for (const auto& e : v) out.emplace_back(e, layout);
  return out;
}

}  // namespace

Grid Grid::parse(std::string_view spec) {
  Grid g;
  if (trim(spec).empty()) return g;
  for (auto item : split(spec, ',')) {
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw SyntaxError("grid entry needs name=lo:hi:count", 0);
    std::string name = trim(item.substr(0, eq));
    if (!is_identifier(name)) throw SyntaxError("bad grid variable '" + name + "'", 0);
    for (const auto& n : g.names)
      if (n == name) throw SyntaxError("grid variable '" + name + "' repeated", 0);
    auto parts = split(item.substr(eq + 1), ':');
    std::vector<double> axis;
    if (parts.size() == 1) {
      axis.push_back(parse_number(parts[0], "grid"));
    } else if (parts.size() == 3) {
      double lo = parse_number(parts[0], "grid"), hi = parse_number(parts[1], "grid");
      double count = parse_number(parts[2], "grid");
      if (count < 0 || count != std::floor(count)) throw SyntaxError("grid count must be a whole number", 0);
      auto n = static_cast<std::size_t>(count);
      for (std::size_t i = 0; i < n; ++i)
        axis.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    } else {
      throw SyntaxError("grid entry needs name=lo:hi:count", 0);
    }
    g.names.push_back(name);
    g.axes.push_back(std::move(axis));
  }
  return g;
}

std::size_t Grid::size() const {
  if (axes.empty()) return 0;
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.size();
  return n;
}

std::vector<double> Grid::point(std::size_t index) const {
  std::vector<double> out(axes.size());
  for (std::size_t k = axes.size(); k-- > 0;) {
    out[k] = axes[k][index % axes[k].size()];
    index /= axes[k].size();
  }
  return out;
}

std::string Grid::str() const {
  std::string out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (k) out += ",";
    const auto& a = axes[k];
    if (a.size() == 1)
      out += names[k] + "=" + fmt(a[0]);
    else
      out += names[k] + "=" + fmt(a.empty() ? 0.0 : a.front()) + ":" + fmt(a.empty() ? 0.0 : a.back()) + ":" +
             std::to_string(a.size());
  }
  return out;
}

HodographSurface integrate_characteristic(const VarSpace& space, const Point& parameters, const ExprVec& gamma,
                                          const Expr& alpha, const std::string& s_name,
                                          const Eigen::VectorXd& u0, double s_base, double s_lo, double s_hi,
                                          const CharacteristicOptions& opt) {
  const auto& dep = space.dependent();
  const std::size_t q = dep.size();
  if (gamma.size() != q || static_cast<std::size_t>(u0.size()) != q) throw Error("characteristic data has wrong length");
  if (!(opt.step > 0)) throw Error("step must be positive");
  if (!(s_lo <= s_base && s_base <= s_hi) || !(s_lo < s_hi)) throw Error("base parameter outside the range");
  std::vector<std::string> names = space.all();
  if (space.contains(s_name)) throw Error("parameter name '" + s_name + "' collides with a system variable");
  names.push_back(s_name);
  Layout layout(names);
  auto g = compile_all(gamma, layout);
  CompiledExpr a(alpha, layout);
  std::vector<double> slots(names.size(), 0.0);
  for (const auto& [k, v] : parameters)
    if (auto it = std::find(names.begin(), names.end(), k); it != names.end())
      slots[static_cast<std::size_t>(it - names.begin())] = v;
  const std::size_t s_slot = names.size() - 1, u_slot = space.independent().size();

  auto rhs = [&](double s, const Eigen::VectorXd& u) {
    slots[s_slot] = s;
    for (std::size_t i = 0; i < q; ++i) slots[u_slot + i] = u(static_cast<Eigen::Index>(i));
    Eigen::VectorXd out(static_cast<Eigen::Index>(q));
    const double av = a(slots);
    for (std::size_t i = 0; i < q; ++i) out(static_cast<Eigen::Index>(i)) = av * g[i](slots);
    return out;
  };
  auto safe_rhs = [&](double s, const Eigen::VectorXd& u) {
    try {
      return rhs(s, u);
    } catch (const EvalError&) {
      throw BlowUp("characteristic field not evaluable", witness_point(dep, u, {{s_name, s}}));
    }
  };
  // One interval with step halving until full and split steps agree.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double, double)> advance =
      [&](const Eigen::VectorXd& u, double s0, double s1) -> Eigen::VectorXd {
    if (std::abs(s1 - s0) < opt.min_step) throw StiffnessAbort("step underflow near s = " + fmt(s0));
    Eigen::VectorXd one = rk4(safe_rhs, u, s0, s1, 1);
    Eigen::VectorXd two = rk4(safe_rhs, u, s0, s1, 2);
    double err = (one - two).cwiseAbs().maxCoeff();
    if (std::isfinite(err) && err <= opt.tolerance * (1.0 + two.cwiseAbs().maxCoeff())) return two;
    double mid = 0.5 * (s0 + s1);
    return advance(advance(u, s0, mid), mid, s1);
  };

  HermiteTable table;
  std::vector<double> back_s;
  std::vector<Eigen::VectorXd> back_u;
  if (s_base > s_lo) {
    int n = step_count(s_base - s_lo, opt.step);
    Eigen::VectorXd u = u0;
    for (int i = 1; i <= n; ++i) {
      double s0 = s_base - (s_base - s_lo) * (i - 1) / n, s1 = s_base - (s_base - s_lo) * i / n;
      u = advance(u, s0, s1);
      check_box(opt.u_box, dep, u, s1, s_name);
      back_s.push_back(s1);
      back_u.push_back(u);
    }
  }
  for (std::size_t i = back_s.size(); i-- > 0;) {
    table.s.push_back(back_s[i]);
    table.u.push_back(back_u[i]);
  }
  table.s.push_back(s_base);
  table.u.push_back(u0);
  if (s_hi > s_base) {
    int n = step_count(s_hi - s_base, opt.step);
    Eigen::VectorXd u = u0;
    for (int i = 1; i <= n; ++i) {
      double s0 = s_base + (s_hi - s_base) * (i - 1) / n, s1 = s_base + (s_hi - s_base) * i / n;
      u = advance(u, s0, s1);
      check_box(opt.u_box, dep, u, s1, s_name);
      table.s.push_back(s1);
      table.u.push_back(u);
    }
  }
  for (std::size_t i = 0; i < table.s.size(); ++i) table.du.push_back(safe_rhs(table.s[i], table.u[i]));

  HodographSurface out;
  out.parameters = {s_name};
  out.dependent = dep;
  out.base_tau = Eigen::VectorXd::Constant(1, s_base);
  out.u0 = u0;
  out.tau_box.set(s_name, s_lo, s_hi);
  out.provenance = "characteristic";
  out.gammas = {gamma};
  out.mu = {{alpha}};
  auto shared = std::make_shared<HermiteTable>(std::move(table));
  out.f = [shared](const Eigen::VectorXd& tau) { return (*shared)(tau(0)); };
  out.df = [shared, s_lo, s_hi](const Eigen::VectorXd& tau) {
    constexpr double h = 1e-6;
    double a = std::max(s_lo, tau(0) - h), b = std::min(s_hi, tau(0) + h);
    Eigen::MatrixXd d = ((*shared)(b) - (*shared)(a)) / (b - a);
    return d;
  };
  // Tangency at interval midpoints.
  for (std::size_t i = 0; i + 1 < shared->s.size(); ++i) {
    double m = 0.5 * (shared->s[i] + shared->s[i + 1]);
    Eigen::VectorXd tau = Eigen::VectorXd::Constant(1, m);
    Eigen::VectorXd want = safe_rhs(m, out.f(tau));
    out.tangency_defect = std::max(out.tangency_defect, (out.df(tau).col(0) - want).cwiseAbs().maxCoeff());
  }
  return out;
}

HodographSurface build_hodograph(const QuasilinearSystem& sys, const std::vector<ExprVec>& gammas, const ExprMat& mu,
                                 const std::vector<std::string>& parameters, const Eigen::VectorXd& base_tau,
                                 const Eigen::VectorXd& u0, const Box& tau_box, const std::optional<ExprVec>& ansatz,
                                 const HodographOptions& opt) {
  const std::size_t k = gammas.size(), q = sys.q();
  if (k == 0 || parameters.size() != k || static_cast<std::size_t>(base_tau.size()) != k)
    throw Error("hodograph needs one parameter and base value per characteristic vector");
  if (mu.size() != k) throw Error("mu must be k x k");
  for (const auto& row : mu)
    if (row.size() != k) throw Error("mu must be k x k");
  for (const auto& g : gammas)
    if (g.size() != q) throw Error("characteristic vector has wrong length");
  if (static_cast<std::size_t>(u0.size()) != q) throw Error("base point has wrong length");
  for (const auto& p : parameters)
    if (!tau_box.contains(p)) throw DomainError("parameter '" + p + "' has no range in the parameter box");

  if (k == 1 && !ansatz) {
    CharacteristicOptions c;
    c.step = opt.step;
    c.u_box = opt.u_box;
    const auto& iv = tau_box[parameters[0]];
    return integrate_characteristic(sys.space(), sys.parameter_values(), gammas[0], mu[0][0], parameters[0], u0,
                                    base_tau(0), iv.lo, iv.hi, c);
  }

  std::vector<std::string> names = sys.space().all();
  for (const auto& p : parameters) {
    if (sys.space().contains(p)) throw Error("parameter name '" + p + "' collides with a system variable");
    names.push_back(p);
  }
  auto layout = std::make_shared<Layout>(names);
  const std::size_t u_slot = sys.p(), tau_slot = sys.space().all().size();
  std::vector<double> base_slots(names.size(), 0.0);
  for (const auto& [name, v] : sys.parameter_values()) base_slots[layout->index(name)] = v;

  struct Flow {
    std::vector<std::vector<CompiledExpr>> gamma;
    std::vector<std::vector<CompiledExpr>> mu;
  };
  auto flow_code = std::make_shared<Flow>();
  for (const auto& g : gammas) flow_code->gamma.push_back(compile_all(g, *layout));
  for (const auto& row : mu) flow_code->mu.push_back(compile_all(row, *layout));
  std::vector<int> steps;
  for (std::size_t a = 0; a < k; ++a) steps.push_back(step_count(tau_box[parameters[a]].width(), opt.step));

  const auto dep = sys.space().dependent();
  auto flow = [flow_code, base_slots, base_tau, u0, u_slot, tau_slot, steps, q, k, dep, u_box = opt.u_box,
               parameters](const std::vector<std::size_t>& order, const Eigen::VectorXd& tau) {
    std::vector<double> slots = base_slots;
    Eigen::VectorXd cur = base_tau;
    Eigen::VectorXd u = u0;
    for (std::size_t a : order) {
      auto rhs = [&](double s, const Eigen::VectorXd& w) {
        cur(static_cast<Eigen::Index>(a)) = s;
        for (std::size_t b = 0; b < k; ++b) slots[tau_slot + b] = cur(static_cast<Eigen::Index>(b));
        for (std::size_t i = 0; i < q; ++i) slots[u_slot + i] = w(static_cast<Eigen::Index>(i));
        Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q));
        for (std::size_t b = 0; b < k; ++b) {
          double m = flow_code->mu[a][b](slots);
          if (m == 0.0) continue;
          for (std::size_t i = 0; i < q; ++i) d(static_cast<Eigen::Index>(i)) += m * flow_code->gamma[b][i](slots);
        }
        return d;
      };
      u = rk4(rhs, u, base_tau(static_cast<Eigen::Index>(a)), tau(static_cast<Eigen::Index>(a)), steps[a]);
      cur(static_cast<Eigen::Index>(a)) = tau(static_cast<Eigen::Index>(a));
      for (std::size_t i = 0; i < q; ++i)
        if (!std::isfinite(u(static_cast<Eigen::Index>(i)))) throw EvalError("flow produced a non-finite value");
      if (!u_box.empty()) check_box(u_box, dep, u, tau(static_cast<Eigen::Index>(a)), parameters[a]);
    }
    return u;
  };
  std::vector<std::size_t> forward(k), backward(k);
  for (std::size_t a = 0; a < k; ++a) {
    forward[a] = a;
    backward[a] = k - 1 - a;
  }

  HodographSurface out;
  out.parameters = parameters;
  out.dependent = dep;
  out.base_tau = base_tau;
  out.u0 = u0;
  out.tau_box = tau_box;
  out.gammas = gammas;
  out.mu = mu;

  Box check_box_all = tau_box;
  for (const auto& [name, v] : sys.parameter_values())
    if (!check_box_all.contains(name)) check_box_all.fix(name, v);

  if (ansatz) {
    if (ansatz->size() != q) throw Error("ansatz has wrong length");
    std::map<std::string, Expr> subst;
    for (std::size_t i = 0; i < q; ++i) subst.emplace(dep[i], (*ansatz)[i]);
    ExprVec defects;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t i = 0; i < q; ++i) {
        ExprVec terms{diff((*ansatz)[i], parameters[a])};
        for (std::size_t b = 0; b < k; ++b) terms.push_back(-(mu[a][b] * substitute(gammas[b][i], subst)));
        defects.push_back(add(std::move(terms)));
      }
    ZeroTestOptions zopt;
    zopt.threshold = opt.ansatz_tolerance;
    zopt.seed = opt.seed;
    auto z = all_zero(defects, check_box_all, zopt);
    out.tangency_defect = z.zero() ? z.max_abs : std::abs(z.value);
    if (!z.zero()) throw NonIntegrable(std::abs(z.value), z.witness);
    auto f_code = std::make_shared<std::vector<CompiledExpr>>(compile_all(*ansatz, *layout));
    auto d_code = std::make_shared<std::vector<std::vector<CompiledExpr>>>();
    for (std::size_t i = 0; i < q; ++i) {
      std::vector<CompiledExpr> row;
      for (const auto& p : parameters) row.emplace_back(diff((*ansatz)[i], p), *layout);
      d_code->push_back(std::move(row));
    }
    out.f = [f_code, base_slots, tau_slot, q](const Eigen::VectorXd& tau) {
      std::vector<double> s = base_slots;
      for (Eigen::Index b = 0; b < tau.size(); ++b) s[tau_slot + static_cast<std::size_t>(b)] = tau(b);
      Eigen::VectorXd u(static_cast<Eigen::Index>(q));
      for (std::size_t i = 0; i < q; ++i) u(static_cast<Eigen::Index>(i)) = (*f_code)[i](s);
      return u;
    };
    out.df = [d_code, base_slots, tau_slot, q, k](const Eigen::VectorXd& tau) {
      std::vector<double> s = base_slots;
      for (Eigen::Index b = 0; b < tau.size(); ++b) s[tau_slot + static_cast<std::size_t>(b)] = tau(b);
      Eigen::MatrixXd d(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k));
      for (std::size_t i = 0; i < q; ++i)
        for (std::size_t a = 0; a < k; ++a)
          d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = (*d_code)[i][a](s);
      return d;
    };
    out.symbolic = *ansatz;
    out.provenance = "ansatz";
    Eigen::VectorXd at_base = out.f(base_tau);
    if ((at_base - u0).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + u0.cwiseAbs().maxCoeff()))
      throw NonIntegrable((at_base - u0).cwiseAbs().maxCoeff(), witness_point(parameters, base_tau));
  } else {
    out.provenance = "flow";
    out.f = [flow, forward](const Eigen::VectorXd& tau) { return flow(forward, tau); };
    out.df = [flow, forward, q, k](const Eigen::VectorXd& tau) {
      constexpr double h = 1e-6;
      Eigen::MatrixXd d(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k));
      for (std::size_t a = 0; a < k; ++a) {
        Eigen::VectorXd p = tau, m = tau;
        p(static_cast<Eigen::Index>(a)) += h;
        m(static_cast<Eigen::Index>(a)) -= h;
        d.col(static_cast<Eigen::Index>(a)) = (flow(forward, p) - flow(forward, m)) / (2 * h);
      }
      return d;
    };
  }

  if (k > 1) {
    std::mt19937_64 rng(opt.seed);
    for (int n = 0; n < opt.swap_samples; ++n) {
      Point p = tau_box.sample(rng);
      Eigen::VectorXd tau(static_cast<Eigen::Index>(k));
      for (std::size_t a = 0; a < k; ++a) tau(static_cast<Eigen::Index>(a)) = p.at(parameters[a]);
      Eigen::VectorXd ua, ub;
      try {
        ua = flow(forward, tau);
        ub = flow(backward, tau);
      } catch (const EvalError& e) {
        throw BlowUp(std::string("flow not evaluable: ") + e.what(), witness_point(parameters, tau));
      }
      double mismatch = (ua - ub).cwiseAbs().maxCoeff();
      out.swap_mismatch = std::max(out.swap_mismatch, mismatch);
      if (mismatch > opt.swap_tolerance)
        throw NonIntegrable(mismatch, witness_point(parameters, tau));
    }
  }
  return out;
}

ImplicitPotential make_potential(const QuasilinearSystem& sys, const Expr& phi) {
  auto layout = std::make_shared<Layout>(sys.space().all());
  auto value = std::make_shared<CompiledExpr>(phi, *layout);
  auto grad = std::make_shared<std::vector<CompiledExpr>>();
  for (const auto& u : sys.space().dependent()) grad->emplace_back(diff(phi, u), *layout);
  std::vector<double> base(sys.space().all().size(), 0.0);
  for (const auto& [name, v] : sys.parameter_values()) base[layout->index(name)] = v;
  const std::size_t p = sys.p(), q = sys.q();
  auto fill = [base, p, q](std::span<const double> x, const Eigen::VectorXd& u) {
    std::vector<double> s = base;
    for (std::size_t i = 0; i < p; ++i) s[i] = x[i];
    for (std::size_t i = 0; i < q; ++i) s[p + i] = u(static_cast<Eigen::Index>(i));
    return s;
  };
  ImplicitPotential out;
  out.symbolic = phi;
  out.value = [value, fill](std::span<const double> x, const Eigen::VectorXd& u) { return (*value)(fill(x, u)); };
  out.grad_u = [grad, fill, q](std::span<const double> x, const Eigen::VectorXd& u) {
    auto s = fill(x, u);
    Eigen::VectorXd g(static_cast<Eigen::Index>(q));
    for (std::size_t i = 0; i < q; ++i) g(static_cast<Eigen::Index>(i)) = (*grad)[i](s);
    return g;
  };
  return out;
}

ImplicitPotential make_potential(const QuasilinearSystem& sys, const Potential& pot, double h) {
  if (pot.symbolic) return make_potential(sys, *pot.symbolic);
  auto x_names = sys.space().independent();
  auto u_names = sys.space().dependent();
  auto params = sys.parameter_values();
  auto eval = pot.evaluate;
  auto at = [x_names, u_names, params, eval](std::span<const double> x, const Eigen::VectorXd& u) {
    Point p = params;
    for (std::size_t i = 0; i < x_names.size(); ++i) p[x_names[i]] = x[i];
    for (std::size_t i = 0; i < u_names.size(); ++i) p[u_names[i]] = u(static_cast<Eigen::Index>(i));
    return eval(p);
  };
  ImplicitPotential out;
  out.value = at;
  out.grad_u = [at, h](std::span<const double> x, const Eigen::VectorXd& u) {
    Eigen::VectorXd g(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      Eigen::VectorXd a = u, b = u;
      a(i) += h;
      b(i) -= h;
      g(i) = (at(x, a) - at(x, b)) / (2 * h);
    }
    return g;
  };
  return out;
}

const char* to_string(PointStatus s) {
  switch (s) {
    case PointStatus::Converged:
      return "converged";
    case PointStatus::Catastrophe:
      return "catastrophe";
    default:
      return "diverged";
  }
}

std::size_t SolutionField::converged() const {
  std::size_t n = 0;
  for (const auto& p : points)
    if (p.status != PointStatus::Diverged) ++n;
  return n;
}

void SolutionField::write_tsv(std::ostream& out) const {
  for (const auto& n : independent) out << n << '\t';
  for (const auto& n : parameters) out << n << '\t';
  for (const auto& n : dependent) out << n << '\t';
  out << "newton_residual\tpde_residual\tdet\titerations\tstatus\n";
  for (const auto& p : points) {
    for (double v : p.x) out << fmt(v) << '\t';
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(parameters.size()); ++i)
      out << (i < p.tau.size() ? fmt(p.tau(i)) : "nan") << '\t';
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(dependent.size()); ++i)
      out << (i < p.u.size() ? fmt(p.u(i)) : "nan") << '\t';
    out << fmt(p.newton_residual) << '\t' << fmt(p.pde_residual) << '\t' << fmt(p.det) << '\t' << p.iterations
        << '\t' << to_string(p.status) << '\n';
  }
}

ImplicitSolver::ImplicitSolver(const QuasilinearSystem& sys, HodographSurface surface,
                               std::vector<ImplicitPotential> potentials, ImplicitSolveConfig cfg)
    : x_names_(sys.space().independent()), surface_(std::move(surface)), phi_(std::move(potentials)),
      cfg_(std::move(cfg)) {
  if (phi_.size() != surface_.k()) throw Error("one potential per hodograph parameter is required");
  if (!(cfg_.tolerance > 0) || !(cfg_.catastrophe_threshold > 0)) throw Error("tolerances must be positive");
  if (cfg_.guess == GuessPolicy::Explicit && static_cast<std::size_t>(cfg_.initial.size()) != surface_.k())
    throw Error("explicit initial guess has wrong length");
}

Eigen::VectorXd ImplicitSolver::cold_start(const std::vector<double>& x) const {
  if (cfg_.guess == GuessPolicy::Explicit) return cfg_.initial;
  Eigen::VectorXd tau(static_cast<Eigen::Index>(phi_.size()));
  for (std::size_t a = 0; a < phi_.size(); ++a) tau(static_cast<Eigen::Index>(a)) = phi_[a].value(x, surface_.u0);
  return tau;
}

double ImplicitSolver::monitor(const std::vector<double>& x, const Eigen::VectorXd& tau) const {
  const auto k = static_cast<Eigen::Index>(phi_.size());
  Eigen::VectorXd u = surface_.f(tau);
  Eigen::MatrixXd phi_u(k, u.size());
  for (Eigen::Index a = 0; a < k; ++a) phi_u.row(a) = phi_[static_cast<std::size_t>(a)].grad_u(x, u).transpose();
  return (Eigen::MatrixXd::Identity(k, k) - phi_u * surface_.df(tau)).determinant();
}

SolutionPoint ImplicitSolver::solve_from(const std::vector<double>& x, const Eigen::VectorXd& start) const {
  const auto k = static_cast<Eigen::Index>(phi_.size());
  SolutionPoint out;
  out.x = x;
  auto residual = [&](const Eigen::VectorXd& tau, Eigen::VectorXd& u) {
    u = surface_.f(tau);
    Eigen::VectorXd g(k);
    for (Eigen::Index a = 0; a < k; ++a) g(a) = tau(a) - phi_[static_cast<std::size_t>(a)].value(x, u);
    return g;
  };
  Eigen::VectorXd tau = start, u, g;
  // A tabulated surface only exists on its parameter range.
  if (surface_.provenance == "characteristic")
    for (std::size_t a = 0; a < surface_.k(); ++a) {
      const auto& iv = surface_.tau_box[surface_.parameters[a]];
      tau(static_cast<Eigen::Index>(a)) = std::clamp(tau(static_cast<Eigen::Index>(a)), iv.lo, iv.hi);
    }
  try {
    g = residual(tau, u);
  } catch (const EvalError&) {
    return out;
  }
  // Damped Newton step; with `halvings` = 0 only the full step is tried.
  auto newton_step = [&](int halvings) {
    const double norm = g.cwiseAbs().maxCoeff();
    Eigen::MatrixXd jac;
    try {
      Eigen::MatrixXd phi_u(k, u.size());
      for (Eigen::Index a = 0; a < k; ++a) phi_u.row(a) = phi_[static_cast<std::size_t>(a)].grad_u(x, u).transpose();
      jac = Eigen::MatrixXd::Identity(k, k) - phi_u * surface_.df(tau);
    } catch (const EvalError&) {
      return false;
    }
    Eigen::VectorXd step = jac.fullPivLu().solve(-g);
    if (!step.allFinite()) return false;
    double lambda = 1.0;
    for (int half = 0; half <= halvings; ++half, lambda *= 0.5) {
      Eigen::VectorXd trial = tau + lambda * step, tu;
      try {
        Eigen::VectorXd tg = residual(trial, tu);
        if (tg.allFinite() && tg.cwiseAbs().maxCoeff() < norm) {
          tau = trial;
          u = tu;
          g = tg;
          return true;
        }
      } catch (const EvalError&) {
      }
    }
    return false;
  };
  for (int it = 0;; ++it) {
    double norm = g.cwiseAbs().maxCoeff();
    if (!std::isfinite(norm)) return out;
    if (norm <= cfg_.tolerance * std::max(1.0, tau.cwiseAbs().maxCoeff())) {
      out.iterations = it;
      break;
    }
    if (it >= cfg_.max_iterations || !newton_step(30)) {
      out.iterations = std::min(it + 1, cfg_.max_iterations);
      return out;
    }
  }
  // Polish to the rounding floor; FD checks of the field difference nearby solutions.
  for (int extra = 0; extra < 2 && g.cwiseAbs().maxCoeff() > 0 && newton_step(0); ++extra) {
  }
  out.tau = tau;
  out.u = u;
  out.newton_residual = g.cwiseAbs().maxCoeff();
  try {
    out.det = monitor(x, tau);
  } catch (const EvalError&) {
    out.det = std::numeric_limits<double>::quiet_NaN();
  }
  out.status = std::abs(out.det) < cfg_.catastrophe_threshold || std::isnan(out.det) ? PointStatus::Catastrophe
                                                                                     : PointStatus::Converged;
  return out;
}

SolutionField solve_implicit(const QuasilinearSystem& sys, const HodographSurface& surface,
                             const std::vector<ImplicitPotential>& potentials, const Grid& grid,
                             const ImplicitSolveConfig& cfg) {
  if (grid.empty()) throw DomainError("empty grid");
  const auto& xn = sys.space().independent();
  if (grid.names.size() != xn.size()) throw DomainError("grid must cover exactly the independent variables");
  std::vector<std::size_t> perm;
  for (const auto& n : xn) {
    auto it = std::find(grid.names.begin(), grid.names.end(), n);
    if (it == grid.names.end()) throw DomainError("grid has no axis for '" + n + "'");
    perm.push_back(static_cast<std::size_t>(it - grid.names.begin()));
  }
  auto solver = std::make_shared<ImplicitSolver>(sys, surface, potentials, cfg);
  SolutionField field;
  field.independent = xn;
  field.dependent = sys.space().dependent();
  field.parameters = surface.parameters;
  field.grid = grid;
  field.catastrophe_threshold = cfg.catastrophe_threshold;
  const std::size_t row = grid.row_length();
  std::optional<Eigen::VectorXd> previous;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i % row == 0) previous.reset();
    auto g = grid.point(i);
    std::vector<double> x(xn.size());
    for (std::size_t a = 0; a < xn.size(); ++a) x[a] = g[perm[a]];
    SolutionPoint p;
    bool done = false;
    if (cfg.warm_start && cfg.warm_first && previous) {
      p = solver->solve_from(x, *previous);
      done = p.status != PointStatus::Diverged;
    }
    if (!done) {
      p = solver->solve_from(x, solver->cold_start(x));
      done = p.status != PointStatus::Diverged;
    }
    if (!done && cfg.warm_start && !cfg.warm_first && previous) p = solver->solve_from(x, *previous);
    if (p.status != PointStatus::Diverged) previous = p.tau;
    field.points.push_back(std::move(p));
  }
  if (field.converged() == 0) throw SolveFailed("Newton iteration diverged at every grid point");
  field.resolve = [solver](const std::vector<double>& x, const Eigen::VectorXd& start) -> std::optional<SolutionPoint> {
    auto p = solver->solve_from(x, start);
    if (p.status == PointStatus::Diverged) return std::nullopt;
    return p;
  };
  return field;
}

std::vector<CatastropheBracket> locate_catastrophe(const SolutionField& field, const std::string& axis) {
  const auto& g = field.grid;
  auto it = std::find(g.names.begin(), g.names.end(), axis);
  if (it == g.names.end()) throw DomainError("grid has no axis '" + axis + "'");
  const auto a = static_cast<std::size_t>(it - g.names.begin());
  std::size_t stride = 1;
  for (std::size_t k = a + 1; k < g.axes.size(); ++k) stride *= g.axes[k].size();
  const std::size_t n = g.axes[a].size();
  std::vector<CatastropheBracket> out;
  for (std::size_t start = 0; start < g.size(); ++start) {
    if ((start / stride) % n != 0) continue;
    auto coords = g.point(start);
    Point line;
    for (std::size_t k = 0; k < g.names.size(); ++k)
      if (k != a) line[g.names[k]] = coords[k];
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const auto& p = field.points[start + j * stride];
      const auto& q = field.points[start + (j + 1) * stride];
      if (!p.regular()) break;
      std::string kind;
      if (!q.regular())
        kind = q.status == PointStatus::Catastrophe ? "monitor" : "breakdown";
      else if ((p.det > 0) != (q.det > 0))
        kind = "sign";
      if (!kind.empty()) {
        out.push_back({line, g.axes[a][j], g.axes[a][j + 1], kind});
        break;
      }
    }
  }
  return out;
}

SolutionField double_wave_fixture() {
  auto file = load_fixture("example2");
  const auto& sys = file.system;
  const Json& hod = file.analysis.at("hodograph");
  std::vector<std::string> tau_names = hod.at("parameters").get<std::vector<std::string>>();
  std::vector<std::string> space_names = sys.space().all();
  space_names.insert(space_names.end(), tau_names.begin(), tau_names.end());
  ExprVec ansatz, gp, gm;
  for (const auto& s : hod.at("ansatz")) ansatz.push_back(parse(s.get<std::string>(), space_names));
  for (const auto& s : file.analysis.at("waves").at(0).at("gamma")) gp.push_back(parse(s.get<std::string>(), sys.space()));
  for (const auto& s : file.analysis.at("waves").at(1).at("gamma")) gm.push_back(parse(s.get<std::string>(), sys.space()));
  Eigen::VectorXd base(2), u0(2);
  base << hod.at("base")[0].get<double>(), hod.at("base")[1].get<double>();
  Expr half = Expr::rational(1, 2);
  auto surface = build_hodograph(sys, {gp, gm}, {{half, Expr::rational(0)}, {Expr::rational(0), half}}, tau_names, base,
                                 Eigen::Vector2d(1, 2), Box::parse(hod.at("box").get<std::string>()), ansatz);
  ImplicitSolveConfig cfg;
  auto solver = std::make_shared<ImplicitSolver>(
      sys, surface,
      std::vector<ImplicitPotential>{make_potential(sys, parse("t - ln(abs(y))/sqrt(u1) + sqrt(u1)", sys.space())),
                                     make_potential(sys, parse("t + ln(abs(y))/sqrt(u1) - sqrt(u1)", sys.space()))},
      cfg);
  auto exact = [solver](const std::vector<double>& x) {
    SolutionPoint p;
    p.x = x;
    const double t = x[0], y = x[2];
    p.u = Eigen::Vector2d(-std::log(std::abs(y)), t);
    const double r = std::sqrt(p.u(0));
    p.tau = Eigen::Vector2d(t + 2 * r, t - 2 * r);
    p.det = solver->monitor(x, p.tau);
    p.newton_residual = 0.0;
    p.status = PointStatus::Converged;
    return p;
  };
  SolutionField field;
  field.independent = sys.space().independent();
  field.dependent = sys.space().dependent();
  field.parameters = tau_names;
  field.grid = Grid::parse(file.analysis.at("grid").get<std::string>());
  for (std::size_t i = 0; i < field.grid.size(); ++i) field.points.push_back(exact(field.grid.point(i)));
  field.resolve = [exact](const std::vector<double>& x, const Eigen::VectorXd&) -> std::optional<SolutionPoint> {
    return exact(x);
  };
  return field;
}

}  // namespace kwave
