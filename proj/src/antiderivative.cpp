#include "kwave/antiderivative.hpp"

namespace kwave {

namespace {

/// Splits a product into factors independent of var and factors depending on it.
void split_factors(const Expr& e, std::string_view var, ExprVec& indep, ExprVec& dep) {
  if (e.op() == Op::Mul) {
    for (const auto& f : e.args()) split_factors(f, var, indep, dep);
    return;
  }
  if (e.op() == Op::Neg) {
    indep.push_back(Expr::rational(-1));
    split_factors(e.args()[0], var, indep, dep);
    return;
  }
  (e.depends_on(var) ? dep : indep).push_back(e);
}

bool is_var(const Expr& e, std::string_view var) { return e.op() == Op::Var && e.name() == var; }

/// a such that e == a*var with a free of var.
std::optional<Expr> linear_coefficient(const Expr& e, std::string_view var) {
  if (is_var(e, var)) return Expr::rational(1);
  ExprVec indep, dep;
  split_factors(e, var, indep, dep);
  if (dep.size() == 1 && is_var(dep[0], var)) return mul(indep);
  return std::nullopt;
}

std::optional<Expr> reciprocal_antiderivative(const Expr& denom, std::string_view var);

std::optional<Expr> core(const Expr& e, std::string_view var) {
  const Expr v = Expr::variable(std::string(var));
  if (is_var(e, var)) return pow(v, Expr::rational(2)) / Expr::rational(2);
  switch (e.op()) {
    case Op::Pow: {
      const Expr& n = e.args()[1];
      if (!is_var(e.args()[0], var) || n.depends_on(var) || !n.is_constant()) return std::nullopt;
      if (n.is_const_value(-1.0)) return ln(abs(v));
      Expr n1 = n + Expr::rational(1);
      return pow(v, n1) / n1;
    }
    case Op::Div: {
      const Expr& a = e.args()[0];
      const Expr& b = e.args()[1];
      if (!b.depends_on(var)) {
        auto f = antiderivative(a, var);
        if (!f) return std::nullopt;
        return *f / b;
      }
      if (!a.depends_on(var)) {
        auto f = reciprocal_antiderivative(b, var);
        if (!f) return std::nullopt;
        return a * *f;
      }
      return std::nullopt;
    }
    case Op::Exp:
    case Op::Sin:
    case Op::Cos: {
      auto a = linear_coefficient(e.args()[0], var);
      if (!a) return std::nullopt;
      if (e.op() == Op::Exp) return e / *a;
      if (e.op() == Op::Sin) return -(cos(e.args()[0]) / *a);
      return sin(e.args()[0]) / *a;
    }
    case Op::Sqrt:
      if (!is_var(e.args()[0], var)) return std::nullopt;
      return Expr::rational(2, 3) * pow(v, Expr::rational(3, 2));
    default:
      return std::nullopt;
  }
}

/// Antiderivative of 1/denom.
std::optional<Expr> reciprocal_antiderivative(const Expr& denom, std::string_view var) {
  ExprVec indep, dep;
  split_factors(denom, var, indep, dep);
  if (dep.size() != 1) return std::nullopt;
  const Expr& d = dep[0];
  Expr scale = mul(indep);
  const Expr v = Expr::variable(std::string(var));
  if (is_var(d, var)) return ln(abs(v)) / scale;
  if (d.op() == Op::Pow && is_var(d.args()[0], var) && d.args()[1].is_constant()) {
    Expr n = -d.args()[1];
    if (n.is_const_value(-1.0)) return ln(abs(v)) / scale;
    Expr n1 = n + Expr::rational(1);
    return pow(v, n1) / (n1 * scale);
  }
  if (d.op() == Op::Sqrt && is_var(d.args()[0], var)) return Expr::rational(2) * d / scale;
  return std::nullopt;
}

}  // namespace

std::optional<Expr> antiderivative(const Expr& e, std::string_view var) {
  if (!e.depends_on(var)) return e * Expr::variable(std::string(var));
  switch (e.op()) {
    case Op::Add: {
      ExprVec terms;
      for (const auto& t : e.args()) {
        auto f = antiderivative(t, var);
        if (!f) return std::nullopt;
        terms.push_back(*f);
      }
      return add(std::move(terms));
    }
    case Op::Sub: {
      auto a = antiderivative(e.args()[0], var);
      auto b = antiderivative(e.args()[1], var);
      if (!a || !b) return std::nullopt;
      return *a - *b;
    }
    case Op::Neg: {
      auto a = antiderivative(e.args()[0], var);
      if (!a) return std::nullopt;
      return -*a;
    }
    case Op::Mul: {
      ExprVec indep, dep;
      split_factors(e, var, indep, dep);
      if (dep.size() != 1) return std::nullopt;
      auto f = core(dep[0], var);
      if (!f) return std::nullopt;
      return mul(indep) * *f;
    }
    default:
      return core(e, var);
  }
}

}  // namespace kwave
