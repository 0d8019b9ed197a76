#include "kwave/system.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "kwave/linalg.hpp"

namespace kwave {

namespace {

std::string entry_name(std::size_t i, std::size_t r, std::size_t c) {
  return "A[" + std::to_string(i) + "][" + std::to_string(r) + "][" + std::to_string(c) + "]";
}

Box with_parameters(const QuasilinearSystem& sys, const Box& domain) {
  Box b = domain;
  for (const auto& [k, v] : sys.parameter_values())
    if (!b.contains(k)) b.fix(k, v);
  return b;
}

}  // namespace

QuasilinearSystem::QuasilinearSystem(VarSpace space, std::vector<TextMatrix> a_text, std::vector<std::string> b_text)
    : space_(std::move(space)), a_text_(std::move(a_text)), b_text_(std::move(b_text)) {
  for (std::size_t i = 0; i < a_text_.size(); ++i) {
    ExprMat m;
    for (std::size_t r = 0; r < a_text_[i].size(); ++r) {
      ExprVec row;
      for (std::size_t c = 0; c < a_text_[i][r].size(); ++c) {
        try {
          row.push_back(parse(a_text_[i][r][c], space_));
        } catch (const SyntaxError& e) {
          throw SyntaxError(entry_name(i, r, c) + ": " + e.what(), e.offset());
        } catch (const UnknownIdentifier& e) {
          throw Error(entry_name(i, r, c) + ": " + e.what());
        }
      }
      m.push_back(std::move(row));
    }
    a_.push_back(std::move(m));
  }
  for (std::size_t r = 0; r < b_text_.size(); ++r) {
    try {
      b_.push_back(parse(b_text_[r], space_));
    } catch (const SyntaxError& e) {
      throw SyntaxError("b[" + std::to_string(r) + "]: " + e.what(), e.offset());
    } catch (const UnknownIdentifier& e) {
      throw Error("b[" + std::to_string(r) + "]: " + e.what());
    }
  }
  validate();
}

QuasilinearSystem QuasilinearSystem::from_exprs(VarSpace space, std::vector<ExprMat> a, ExprVec b) {
  QuasilinearSystem sys;
  sys.space_ = std::move(space);
  sys.a_ = std::move(a);
  sys.b_ = std::move(b);
  sys.fill_text();
  sys.validate();
  return sys;
}

void QuasilinearSystem::fill_text() {
  for (const auto& m : a_) {
    TextMatrix t;
    for (const auto& row : m) {
      std::vector<std::string> tr;
      for (const auto& e : row) tr.push_back(e.str());
      t.push_back(std::move(tr));
    }
    a_text_.push_back(std::move(t));
  }
  for (const auto& e : b_) b_text_.push_back(e.str());
}

void QuasilinearSystem::validate() const {
  if (a_.size() != p())
    throw Error("expected " + std::to_string(p()) + " coefficient matrices, got " + std::to_string(a_.size()));
  if (b_.empty()) throw Error("source vector is empty");
  for (std::size_t i = 0; i < a_.size(); ++i) {
    if (a_[i].size() != m())
      throw Error("A[" + std::to_string(i) + "] has " + std::to_string(a_[i].size()) + " rows, expected " +
                  std::to_string(m()));
    for (const auto& row : a_[i])
      if (row.size() != q())
        throw Error("A[" + std::to_string(i) + "] has a row of length " + std::to_string(row.size()) +
                    ", expected " + std::to_string(q()));
  }
}

void QuasilinearSystem::set_parameter(const std::string& name, double value) {
  const auto& ps = space_.parameters();
  if (std::find(ps.begin(), ps.end(), name) == ps.end()) throw Error("'" + name + "' is not a parameter");
  params_[name] = value;
}

ExprMat QuasilinearSystem::symbol(const ExprVec& lambda) const {
  if (lambda.size() != p()) throw Error("covector has wrong length");
  ExprMat out(m(), ExprVec(q()));
  for (std::size_t r = 0; r < m(); ++r)
    for (std::size_t c = 0; c < q(); ++c) {
      ExprVec terms;
      for (std::size_t i = 0; i < p(); ++i) terms.push_back(lambda[i] * a_[i][r][c]);
      out[r][c] = add(std::move(terms));
    }
  return out;
}

std::optional<std::size_t> QuasilinearSystem::evolutionary_index() const {
  if (!properly_determined()) return std::nullopt;
  for (std::size_t i = p(); i-- > 0;) {
    bool id = true;
    for (std::size_t r = 0; r < m() && id; ++r)
      for (std::size_t c = 0; c < q() && id; ++c) id = a_[i][r][c].is_const_value(r == c ? 1.0 : 0.0);
    if (id) return i;
  }
  return std::nullopt;
}

bool QuasilinearSystem::source_is_zero() const {
  for (const auto& e : b_)
    if (!e.is_zero_constant()) return false;
  return true;
}

Json system_to_json(const QuasilinearSystem& sys) {
  Json j = Json::object();
  if (!sys.name.empty()) j["name"] = sys.name;
  j["independent"] = sys.space().independent();
  j["dependent"] = sys.space().dependent();
  j["parameters"] = sys.space().parameters();
  if (!sys.parameter_values().empty()) {
    Json pv = Json::object();
    for (const auto& [k, v] : sys.parameter_values()) pv[k] = v;
    j["parameter_values"] = pv;
  }
  j["A"] = sys.a_text();
  j["b"] = sys.b_text();
  return j;
}

QuasilinearSystem system_from_json(const Json& j) {
  auto list = [&](const char* key, bool required) {
    std::vector<std::string> out;
    if (!j.contains(key)) {
      if (required) throw Error(std::string("missing key '") + key + "'");
      return out;
    }
    for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
    return out;
  };
  if (!j.is_object()) throw Error("system definition must be an object");
  VarSpace space(list("independent", true), list("dependent", true), list("parameters", false));
  if (!j.contains("A")) throw Error("missing key 'A'");
  if (!j.contains("b")) throw Error("missing key 'b'");
  auto a = j.at("A").get<std::vector<QuasilinearSystem::TextMatrix>>();
  auto b = j.at("b").get<std::vector<std::string>>();
  QuasilinearSystem sys(std::move(space), std::move(a), std::move(b));
  if (j.contains("parameter_values"))
    for (const auto& [k, v] : j.at("parameter_values").items()) sys.set_parameter(k, v.get<double>());
  if (j.contains("name")) sys.name = j.at("name").get<std::string>();
  return sys;
}

SystemFile parse_system_file(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SyntaxError(std::string("malformed system file: ") + e.what(), e.byte);
  }
  SystemFile f;
  try {
    f.system = system_from_json(j);
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed system file: ") + e.what());
  }
  if (j.contains("analysis")) f.analysis = j.at("analysis");
  return f;
}

SystemFile load_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_system_file(ss.str());
}

std::string dump_system(const QuasilinearSystem& sys, const Json& analysis) {
  Json j = system_to_json(sys);
  if (!analysis.is_null()) j["analysis"] = analysis;
  return j.dump(2) + "\n";
}

SystemEvaluator::SystemEvaluator(const QuasilinearSystem& sys) : sys_(&sys), layout_(sys.space().all()) {
  for (const auto& m : sys.A()) {
    std::vector<std::vector<CompiledExpr>> cm;
    for (const auto& row : m) {
      std::vector<CompiledExpr> cr;
      for (const auto& e : row) cr.emplace_back(e, layout_);
      cm.push_back(std::move(cr));
    }
    a_.push_back(std::move(cm));
  }
  for (const auto& e : sys.b()) b_.emplace_back(e, layout_);
  for (const auto& name : sys.space().parameters()) {
    auto it = sys.parameter_values().find(name);
    param_slots_.push_back(it == sys.parameter_values().end() ? std::nan("") : it->second);
  }
}

std::vector<double> SystemEvaluator::slots(std::span<const double> x, std::span<const double> u) const {
  std::vector<double> s;
  s.reserve(layout_.size());
  s.insert(s.end(), x.begin(), x.end());
  s.insert(s.end(), u.begin(), u.end());
  for (std::size_t i = 0; i < param_slots_.size(); ++i) {
    if (std::isnan(param_slots_[i]))
      throw EvalError("parameter '" + sys_->space().parameters()[i] + "' has no value");
    s.push_back(param_slots_[i]);
  }
  return s;
}

std::vector<double> SystemEvaluator::slots(const Point& pt) const {
  std::vector<double> s(layout_.size());
  const std::size_t np = sys_->p() + sys_->q();
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    auto it = pt.find(layout_.names()[i]);
    if (it != pt.end()) {
      s[i] = it->second;
    } else if (i >= np && !std::isnan(param_slots_[i - np])) {
      s[i] = param_slots_[i - np];
    } else {
      throw EvalError("variable '" + layout_.names()[i] + "' is not assigned");
    }
  }
  return s;
}

double SystemEvaluator::eval(const CompiledExpr& c, std::span<const double> slots, const std::string& entry) const {
  try {
    return c(slots);
  } catch (const EvalError& e) {
    throw EvalError(entry + ": " + e.what());
  }
}

Eigen::MatrixXd SystemEvaluator::A(std::size_t i, std::span<const double> slots) const {
  const std::size_t m = sys_->m(), q = sys_->q();
  Eigen::MatrixXd out(m, q);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < q; ++c) out(r, c) = eval(a_[i][r][c], slots, entry_name(i, r, c));
  return out;
}

Eigen::VectorXd SystemEvaluator::b(std::span<const double> slots) const {
  Eigen::VectorXd out(sys_->m());
  for (std::size_t r = 0; r < sys_->m(); ++r) out(r) = eval(b_[r], slots, "b[" + std::to_string(r) + "]");
  return out;
}

Eigen::VectorXd SystemEvaluator::residual(std::span<const double> slots, const Eigen::MatrixXd& jac) const {
  if (static_cast<std::size_t>(jac.rows()) != sys_->q() || static_cast<std::size_t>(jac.cols()) != sys_->p())
    throw Error("jacobian has wrong shape");
  Eigen::VectorXd r = -b(slots);
  for (std::size_t i = 0; i < sys_->p(); ++i) r += A(i, slots) * jac.col(static_cast<Eigen::Index>(i));
  return r;
}

double SystemEvaluator::coefficient_scale(std::span<const double> slots) const {
  double s = b(slots).cwiseAbs().maxCoeff();
  for (std::size_t i = 0; i < sys_->p(); ++i) s = std::max(s, A(i, slots).cwiseAbs().maxCoeff());
  return s;
}

Eigen::VectorXd residual(const QuasilinearSystem& sys, const Point& x, std::span<const double> u,
                         const Eigen::MatrixXd& jac) {
  SystemEvaluator ev(sys);
  Point pt = x;
  for (std::size_t k = 0; k < sys.q(); ++k) pt[sys.space().dependent()[k]] = u[k];
  return ev.residual(ev.slots(pt), jac);
}

RowPermutation permute_sources_first(const QuasilinearSystem& sys, const Box& domain) {
  Box box = with_parameters(sys, domain);
  RowPermutation out;
  std::size_t first = sys.m();
  for (std::size_t r = 0; r < sys.m(); ++r)
    if (!is_zero(sys.b()[r], box).zero()) {
      first = r;
      break;
    }
  out.order.resize(sys.m());
  for (std::size_t r = 0; r < sys.m(); ++r) out.order[r] = r;
  if (first == sys.m() || first == 0) {
    out.system = sys;
    return out;
  }
  std::swap(out.order[0], out.order[first]);
  std::vector<ExprMat> a;
  for (const auto& m : sys.A()) {
    ExprMat pm;
    for (std::size_t r : out.order) pm.push_back(m[r]);
    a.push_back(std::move(pm));
  }
  ExprVec b;
  for (std::size_t r : out.order) b.push_back(sys.b()[r]);
  out.system = QuasilinearSystem::from_exprs(sys.space(), std::move(a), std::move(b));
  for (const auto& [k, v] : sys.parameter_values()) out.system.set_parameter(k, v);
  out.system.name = sys.name;
  return out;
}

HomogenizationResult homogenize(const QuasilinearSystem& sys, const Box& domain, const HomogenizeOptions& opt) {
  const std::size_t m = sys.m();
  HomogenizationResult res;
  Box box = with_parameters(sys, domain);
  bool all_zero = true;
  for (const auto& e : sys.b())
    if (!is_zero(e, box).zero()) {
      all_zero = false;
      break;
    }
  if (all_zero) {
    res.system = sys;
    res.all_sources_zero = true;
    res.M.assign(m, ExprVec(m));
    for (std::size_t r = 0; r < m; ++r) res.M[r][r] = Expr::rational(1);
    return res;
  }
  if (!sys.properly_determined())
    throw DomainError("homogenization needs as many equations as dependent variables");
  auto z = is_zero(sys.b()[0], box);
  if (z.zero()) throw DomainError("first source component vanishes identically; permute equations first");

  std::string name = opt.new_variable.value_or("");
  if (name.empty()) {
    name = "x" + std::to_string(sys.p() + 1) + kHomogenizeSuffix;
    while (sys.space().contains(name)) name += kHomogenizeSuffix;
  } else if (sys.space().contains(name)) {
    throw DomainError("new variable '" + name + "' collides with an existing name");
  }
  const std::string& u1 = sys.space().dependent()[0];
  const Expr& b1 = sys.b()[0];

  res.M.assign(m, ExprVec(m));
  for (std::size_t r = 0; r < m; ++r) {
    res.M[r][0] = r == 0 ? Expr::rational(1) / b1 : -(sys.b()[r] / b1);
    if (r > 0) res.M[r][r] = Expr::rational(1);
  }

  std::map<std::string, Expr> shift{{u1, Expr::variable(u1) + Expr::variable(name)}};
  std::vector<ExprMat> a;
  for (std::size_t i = 0; i < sys.p(); ++i) {
    ExprMat out(m, ExprVec(sys.q()));
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < sys.q(); ++c) {
        const Expr& top = sys.A(i)[0][c];
        Expr e = r == 0 ? top / b1 : sys.A(i)[r][c] - sys.b()[r] * top / b1;
        out[r][c] = substitute(e, shift);
      }
    a.push_back(std::move(out));
  }
  ExprMat id(m, ExprVec(sys.q()));
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < sys.q(); ++c) id[r][c] = Expr::rational(r == c ? 1 : 0);
  a.push_back(std::move(id));

  auto indep = sys.space().independent();
  indep.push_back(name);
  VarSpace space(std::move(indep), sys.space().dependent(), sys.space().parameters());
  res.system = QuasilinearSystem::from_exprs(std::move(space), std::move(a), ExprVec(m, Expr::rational(0)));
  for (const auto& [k, v] : sys.parameter_values()) res.system.set_parameter(k, v);
  res.system.name = sys.name.empty() ? "" : sys.name + "_homogeneous";
  res.new_variable = name;
  res.shifted_variable = u1;
  return res;
}

ZeroTest check_normalization(const QuasilinearSystem& original, const HomogenizationResult& h, const Box& domain,
                             const ZeroTestOptions& opt) {
  const std::size_t m = original.m();
  ExprVec diffs;
  for (std::size_t r = 0; r < m; ++r) {
    ExprVec terms;
    for (std::size_t k = 0; k < m; ++k) terms.push_back(h.M[r][k] * original.b()[k]);
    diffs.push_back(add(std::move(terms)) - Expr::rational(r == 0 ? 1 : 0));
  }
  return all_zero(diffs, with_parameters(original, domain), opt);
}

Jet project_jet(const SystemEvaluator& ev, Jet jet) {
  const auto& sys = ev.system();
  const std::size_t p = sys.p(), q = sys.q(), m = sys.m();
  auto s = ev.slots(jet.x, jet.u);
  // The residual is affine in the jacobian entries: r = L vec(J) - b.
  Eigen::MatrixXd L(m, p * q);
  for (std::size_t i = 0; i < p; ++i) L.middleCols(static_cast<Eigen::Index>(i * q), q) = ev.A(i, s);
  Eigen::VectorXd r = ev.residual(s, jet.jac);
  Eigen::VectorXd dv = L.completeOrthogonalDecomposition().solve(r);
  for (std::size_t i = 0; i < p; ++i)
    jet.jac.col(static_cast<Eigen::Index>(i)) -= dv.segment(static_cast<Eigen::Index>(i * q), q);
  return jet;
}

Jet transport_jet(const Jet& jet, double s) {
  Jet out = jet;
  out.x.push_back(s);
  const auto q = static_cast<Eigen::Index>(jet.u.size());
  out.u[0] -= s;
  out.jac.conservativeResize(q, jet.jac.cols() + 1);
  out.jac.col(jet.jac.cols()).setZero();
  out.jac(0, jet.jac.cols()) = -1.0;
  return out;
}

ReverseCheck check_reverse(const HomogenizationResult& h,
                           const std::function<std::vector<double>(const Point&)>& homogeneous_solution,
                           const Box& domain, int samples, std::uint64_t seed, double tol) {
  ReverseCheck out;
  std::mt19937_64 rng(seed);
  const Interval& srange = domain[h.new_variable];
  std::uniform_real_distribution<double> pick(srange.lo, srange.hi);
  for (int k = 0; k < samples; ++k) {
    Point pt = domain.sample(rng);
    std::vector<double> ref;
    for (int j = 0; j < 3; ++j) {
      pt[h.new_variable] = j == 0 ? srange.lo + 0.5 * srange.width() : pick(rng);
      std::vector<double> v = homogeneous_solution(pt);
      v[0] += pt[h.new_variable];
      if (ref.empty()) {
        ref = v;
        continue;
      }
      for (std::size_t c = 0; c < v.size(); ++c) {
        double d = std::abs(v[c] - ref[c]);
        if (d > out.max_variation) {
          out.max_variation = d;
          if (d > tol && out.independent) out.witness = pt;
        }
        if (d > tol) out.independent = false;
      }
    }
  }
  return out;
}

Eigen::VectorXd split_simple_element(const QuasilinearSystem& sys, const ExprVec& lambda, std::size_t q_h,
                                     const Eigen::VectorXd& gamma2, const Point& at) {
  const std::size_t q = sys.q(), m = sys.m();
  if (q_h > q) throw Error("partition larger than the number of dependent variables");
  if (static_cast<std::size_t>(gamma2.size()) != q - q_h) throw Error("gamma2 has wrong length");
  SystemEvaluator ev(sys);
  auto s = ev.slots(at);
  Layout layout = ev.layout();
  Eigen::MatrixXd sym = Eigen::MatrixXd::Zero(m, q);
  for (std::size_t i = 0; i < sys.p(); ++i) {
    double li = CompiledExpr(lambda[i], layout)(s);
    sym += li * ev.A(i, s);
  }
  Eigen::VectorXd rhs = ev.b(s);
  if (q_h < q) rhs -= sym.rightCols(static_cast<Eigen::Index>(q - q_h)) * gamma2;
  if (q_h == 0) return Eigen::VectorXd();
  Eigen::MatrixXd block = sym.leftCols(static_cast<Eigen::Index>(q_h));
  double cond = condition_number(block);
  if (!(cond < 1e12)) throw SingularBlock("simple-element block is singular at " + format_point(at), cond);
  Eigen::VectorXd g1;
  if (m == q_h)
    g1 = block.partialPivLu().solve(rhs);
  else
    g1 = block.completeOrthogonalDecomposition().solve(rhs);
  double defect = (block * g1 - rhs).norm();
  if (defect > 1e-10 * std::max(1.0, rhs.norm()))
    throw SingularBlock("simple-element equations are inconsistent at " + format_point(at) +
                            " (defect " + std::to_string(defect) + ")",
                        cond);
  return g1;
}

}  // namespace kwave
