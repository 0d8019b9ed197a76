#include "kwave/expr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kwave {

struct Node {
  Op op = Op::Const;
  double value = 0.0;
  bool exact = false;
  Rational q;
  std::string name;
  std::vector<Expr> args;
  std::size_t size = 1;
};

namespace {

constexpr double kExactLimit = 9.0e15;

__extension__ typedef __int128 i128;

std::optional<Rational> normalize(i128 n, i128 d) {
  if (d == 0) return std::nullopt;
  if (d < 0) {
    n = -n;
    d = -d;
  }
  i128 a = n < 0 ? -n : n;
  i128 b = d;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    n /= a;
    d /= a;
  }
  constexpr i128 lim = static_cast<i128>(kExactLimit);
  if (n > lim || n < -lim || d > lim) return std::nullopt;
  return Rational{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
}

std::optional<Rational> q_add(Rational a, Rational b) {
  return normalize(static_cast<i128>(a.num) * b.den + static_cast<i128>(b.num) * a.den,
                   static_cast<i128>(a.den) * b.den);
}

std::optional<Rational> q_mul(Rational a, Rational b) {
  return normalize(static_cast<i128>(a.num) * b.num, static_cast<i128>(a.den) * b.den);
}

std::optional<Rational> q_div(Rational a, Rational b) {
  if (b.num == 0) return std::nullopt;
  return normalize(static_cast<i128>(a.num) * b.den, static_cast<i128>(a.den) * b.num);
}

std::optional<Rational> q_pow(Rational a, std::int64_t n) {
  if (n < 0) {
    if (a.num == 0) return std::nullopt;
    a = Rational{a.den, a.num};
    if (a.den < 0) a = Rational{-a.num, -a.den};
    n = -n;
  }
  Rational r{1, 1};
  for (std::int64_t i = 0; i < n; ++i) {
    auto next = q_mul(r, a);
    if (!next) return std::nullopt;
    r = *next;
  }
  return r;
}

std::optional<std::int64_t> as_integer(const Expr& e) {
  if (!e.is_constant()) return std::nullopt;
  auto q = e.exact();
  if (q && q->den == 1) return q->num;
  double v = e.value();
  if (std::floor(v) == v && std::abs(v) < 1e6) return static_cast<std::int64_t>(v);
  return std::nullopt;
}

std::size_t total_size(const std::vector<Expr>& args) {
  std::size_t s = 1;
  for (const auto& a : args) s += a.size();
  return s;
}

}  // namespace

Expr::Expr() : Expr(Expr::rational(0)) {}

Expr Expr::constant(double v) {
  if (std::floor(v) == v && std::abs(v) < kExactLimit) return rational(static_cast<std::int64_t>(v));
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return Expr(std::move(n));
}

Expr Expr::rational(std::int64_t num, std::int64_t den) {
  auto q = normalize(num, den);
  if (!q) {
    if (den == 0) throw EvalError("division by zero in constant");
    return constant(static_cast<double>(num) / static_cast<double>(den));
  }
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->exact = true;
  n->q = *q;
  n->value = static_cast<double>(q->num) / static_cast<double>(q->den);
  return Expr(std::move(n));
}

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }

bool Expr::is_const_value(double v) const { return node_->op == Op::Const && node_->value == v; }

double Expr::value() const { return node_->value; }

std::optional<Rational> Expr::exact() const {
  if (node_->op == Op::Const && node_->exact) return node_->q;
  return std::nullopt;
}

const std::string& Expr::name() const { return node_->name; }

const std::vector<Expr>& Expr::args() const { return node_->args; }

std::size_t Expr::size() const { return node_->size; }

bool Expr::depends_on(std::string_view var) const {
  if (node_->op == Op::Var) return node_->name == var;
  for (const auto& a : node_->args)
    if (a.depends_on(var)) return true;
  return false;
}

void Expr::collect_variables(std::set<std::string>& out) const {
  if (node_->op == Op::Var) {
    out.insert(node_->name);
    return;
  }
  for (const auto& a : node_->args) a.collect_variables(out);
}

std::set<std::string> Expr::variables() const {
  std::set<std::string> s;
  collect_variables(s);
  return s;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  const Node& x = *a.node_;
  const Node& y = *b.node_;
  if (x.op != y.op || x.size != y.size) return false;
  switch (x.op) {
    case Op::Const:
      if (x.exact && y.exact) return x.q.num == y.q.num && x.q.den == y.q.den;
      return x.value == y.value;
    case Op::Var:
      return x.name == y.name;
    default:
      if (x.args.size() != y.args.size()) return false;
      for (std::size_t i = 0; i < x.args.size(); ++i)
        if (!(x.args[i] == y.args[i])) return false;
      return true;
  }
}

Expr Expr::make(Op op, std::vector<Expr> args) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->size = total_size(args);
  n->args = std::move(args);
  return Expr(std::move(n));
}

namespace {

Expr const_add(const Expr& a, const Expr& b) {
  auto qa = a.exact();
  auto qb = b.exact();
  if (qa && qb)
    if (auto r = q_add(*qa, *qb)) return Expr::rational(r->num, r->den);
  return Expr::constant(a.value() + b.value());
}

Expr const_mul(const Expr& a, const Expr& b) {
  auto qa = a.exact();
  auto qb = b.exact();
  if (qa && qb)
    if (auto r = q_mul(*qa, *qb)) return Expr::rational(r->num, r->den);
  return Expr::constant(a.value() * b.value());
}

Expr const_neg(const Expr& a) {
  if (auto q = a.exact()) return Expr::rational(-q->num, q->den);
  return Expr::constant(-a.value());
}

}  // namespace

Expr add(std::vector<Expr> terms) {
  std::vector<Expr> flat;
  Expr c = Expr::rational(0);
  for (auto& t : terms) {
    if (t.op() == Op::Add) {
      for (const auto& s : t.args()) {
        if (s.is_constant())
          c = const_add(c, s);
        else
          flat.push_back(s);
      }
    } else if (t.is_constant()) {
      c = const_add(c, t);
    } else {
      flat.push_back(std::move(t));
    }
  }
  // cancel t + (-t)
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i].op() != Op::Neg) continue;
    for (std::size_t j = 0; j < flat.size(); ++j) {
      if (j == i || !(flat[j] == flat[i].args()[0])) continue;
      flat.erase(flat.begin() + static_cast<std::ptrdiff_t>(std::max(i, j)));
      flat.erase(flat.begin() + static_cast<std::ptrdiff_t>(std::min(i, j)));
      i = static_cast<std::size_t>(-1);
      break;
    }
  }
  if (!c.is_zero_constant()) flat.push_back(c);
  if (flat.empty()) return Expr::rational(0);
  if (flat.size() == 1) return flat[0];
  return Expr::make(Op::Add, std::move(flat));
}

Expr mul(std::vector<Expr> factors) {
  std::vector<Expr> flat;
  Expr c = Expr::rational(1);
  auto absorb = [&](Expr f, auto&& self) -> void {
    if (f.is_constant()) {
      c = const_mul(c, f);
    } else if (f.op() == Op::Mul) {
      for (const auto& g : f.args()) self(g, self);
    } else if (f.op() == Op::Neg) {
      c = const_neg(c);
      self(f.args()[0], self);
    } else {
      flat.push_back(std::move(f));
    }
  };
  for (auto& f : factors) absorb(std::move(f), absorb);
  if (c.is_zero_constant()) return Expr::rational(0);
  if (flat.empty()) return c;
  bool negate = c.is_const_value(-1.0);
  Expr body = flat.size() == 1 ? flat[0] : Expr::make(Op::Mul, flat);
  if (c.is_const_value(1.0)) return body;
  if (negate) return Expr::make(Op::Neg, {body});
  flat.insert(flat.begin(), c);
  return Expr::make(Op::Mul, std::move(flat));
}

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }

Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }

Expr operator-(const Expr& a) {
  if (a.is_constant()) return const_neg(a);
  if (a.op() == Op::Neg) return a.args()[0];
  if (a.op() == Op::Mul && a.args()[0].is_constant()) return mul({Expr::rational(-1), a});
  return Expr::make(Op::Neg, {a});
}

Expr operator-(const Expr& a, const Expr& b) {
  if (b.is_zero_constant()) return a;
  if (a.is_zero_constant()) return -b;
  if (a == b) return Expr::rational(0);
  if (a.is_constant() && b.is_constant()) return const_add(a, const_neg(b));
  if (b.is_constant()) return add({a, const_neg(b)});
  if (b.op() == Op::Neg) return add({a, b.args()[0]});
  return Expr::make(Op::Sub, {a, b});
}

Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_const_value(1.0)) return a;
  if (b.is_const_value(-1.0)) return -a;
  if (a.is_zero_constant() && !b.is_zero_constant()) return Expr::rational(0);
  if (a == b && !b.is_zero_constant()) return Expr::rational(1);
  if (a.is_constant() && b.is_constant() && !b.is_zero_constant()) {
    auto qa = a.exact();
    auto qb = b.exact();
    if (qa && qb)
      if (auto r = q_div(*qa, *qb)) return Expr::rational(r->num, r->den);
    return Expr::constant(a.value() / b.value());
  }
  return Expr::make(Op::Div, {a, b});
}

Expr operator+(const Expr& a, double b) { return a + Expr::constant(b); }
Expr operator+(double a, const Expr& b) { return Expr::constant(a) + b; }
Expr operator-(const Expr& a, double b) { return a - Expr::constant(b); }
Expr operator-(double a, const Expr& b) { return Expr::constant(a) - b; }
Expr operator*(const Expr& a, double b) { return a * Expr::constant(b); }
Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
Expr operator/(const Expr& a, double b) { return a / Expr::constant(b); }
Expr operator/(double a, const Expr& b) { return Expr::constant(a) / b; }

Expr pow(const Expr& base, const Expr& exponent) {
  if (exponent.is_zero_constant()) return Expr::rational(1);
  if (exponent.is_const_value(1.0)) return base;
  if (base.is_const_value(1.0)) return Expr::rational(1);
  if (base.is_constant() && exponent.is_constant()) {
    auto n = as_integer(exponent);
    auto qb = base.exact();
    if (n && qb && std::abs(*n) <= 64)
      if (auto r = q_pow(*qb, *n)) return Expr::rational(r->num, r->den);
    if (base.is_zero_constant() && exponent.value() > 0) return Expr::rational(0);
  } else if (base.is_zero_constant() && exponent.is_constant() && exponent.value() > 0) {
    return Expr::rational(0);
  }
  return Expr::make(Op::Pow, {base, exponent});
}

Expr pow(const Expr& base, double exponent) { return pow(base, Expr::constant(exponent)); }

namespace {

std::optional<std::int64_t> exact_isqrt(std::int64_t v) {
  if (v < 0) return std::nullopt;
  auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(v))));
  for (std::int64_t c = std::max<std::int64_t>(0, r - 1); c <= r + 1; ++c)
    if (c * c == v) return c;
  return std::nullopt;
}

}  // namespace

Expr sqrt(const Expr& e) {
  if (auto q = e.exact(); q && q->num >= 0) {
    auto n = exact_isqrt(q->num);
    auto d = exact_isqrt(q->den);
    if (n && d) return Expr::rational(*n, *d);
  }
  return Expr::make(Op::Sqrt, {e});
}

Expr ln(const Expr& e) {
  if (e.is_const_value(1.0)) return Expr::rational(0);
  if (e.op() == Op::Exp) return e.args()[0];
  return Expr::make(Op::Ln, {e});
}

Expr abs(const Expr& e) {
  if (auto q = e.exact()) return Expr::rational(q->num < 0 ? -q->num : q->num, q->den);
  if (e.op() == Op::Abs) return e;
  if (e.op() == Op::Neg) return abs(e.args()[0]);
  return Expr::make(Op::Abs, {e});
}

Expr exp(const Expr& e) {
  if (e.is_zero_constant()) return Expr::rational(1);
  return Expr::make(Op::Exp, {e});
}

Expr sin(const Expr& e) {
  if (e.is_zero_constant()) return Expr::rational(0);
  return Expr::make(Op::Sin, {e});
}

Expr cos(const Expr& e) {
  if (e.is_zero_constant()) return Expr::rational(1);
  return Expr::make(Op::Cos, {e});
}

Expr diff(const Expr& e, std::string_view v) {
  if (!e.depends_on(v)) return Expr::rational(0);
  const auto& a = e.args();
  switch (e.op()) {
    case Op::Const:
      return Expr::rational(0);
    case Op::Var:
      return Expr::rational(1);
    case Op::Add: {
      std::vector<Expr> terms;
      for (const auto& t : a) terms.push_back(diff(t, v));
      return add(std::move(terms));
    }
    case Op::Mul: {
      std::vector<Expr> terms;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].depends_on(v)) continue;
        std::vector<Expr> f = a;
        f[i] = diff(a[i], v);
        terms.push_back(mul(std::move(f)));
      }
      return add(std::move(terms));
    }
    case Op::Sub:
      return diff(a[0], v) - diff(a[1], v);
    case Op::Div: {
      Expr dn = diff(a[0], v);
      if (!a[1].depends_on(v)) return dn / a[1];
      Expr dd = diff(a[1], v);
      return (dn * a[1] - a[0] * dd) / pow(a[1], Expr::rational(2));
    }
    case Op::Pow: {
      const Expr& b = a[0];
      const Expr& x = a[1];
      if (!x.depends_on(v)) return mul({x, pow(b, x - Expr::rational(1)), diff(b, v)});
      // d(b^x) = b^x (x' ln b + x b'/b)
      return e * (diff(x, v) * ln(b) + x * diff(b, v) / b);
    }
    case Op::Neg:
      return -diff(a[0], v);
    case Op::Sqrt:
      return diff(a[0], v) / (Expr::rational(2) * e);
    case Op::Ln:
      return diff(a[0], v) / a[0];
    case Op::Abs:
      // sign(x) = x/|x|
      return diff(a[0], v) * a[0] / e;
    case Op::Exp:
      return diff(a[0], v) * e;
    case Op::Sin:
      return diff(a[0], v) * cos(a[0]);
    case Op::Cos:
      return -(diff(a[0], v) * sin(a[0]));
  }
  return Expr::rational(0);
}

namespace {

Expr rebuild(Op op, std::vector<Expr> args) {
  switch (op) {
    case Op::Add:
      return add(std::move(args));
    case Op::Mul:
      return mul(std::move(args));
    case Op::Sub:
      return args[0] - args[1];
    case Op::Div:
      return args[0] / args[1];
    case Op::Pow:
      return pow(args[0], args[1]);
    case Op::Neg:
      return -args[0];
    case Op::Sqrt:
      return sqrt(args[0]);
    case Op::Ln:
      return ln(args[0]);
    case Op::Abs:
      return abs(args[0]);
    case Op::Exp:
      return exp(args[0]);
    case Op::Sin:
      return sin(args[0]);
    case Op::Cos:
      return cos(args[0]);
    default:
      return Expr::make(op, std::move(args));
  }
}

}  // namespace

Expr substitute(const Expr& e, const std::map<std::string, Expr>& repl) {
  if (e.op() == Op::Var) {
    auto it = repl.find(e.name());
    return it == repl.end() ? e : it->second;
  }
  if (e.is_constant()) return e;
  bool touched = false;
  for (const auto& [k, _] : repl)
    if (e.depends_on(k)) {
      touched = true;
      break;
    }
  if (!touched) return e;
  std::vector<Expr> args;
  args.reserve(e.args().size());
  for (const auto& a : e.args()) args.push_back(substitute(a, repl));
  return rebuild(e.op(), std::move(args));
}

VarSpace::VarSpace(std::vector<std::string> independent, std::vector<std::string> dependent,
                   std::vector<std::string> parameters)
    : independent_(std::move(independent)), dependent_(std::move(dependent)), parameters_(std::move(parameters)) {
  std::set<std::string> seen;
  for (const auto& n : all()) {
    if (!is_identifier(n)) throw Error("invalid variable name '" + n + "'");
    if (is_reserved_name(n)) throw Error("variable name '" + n + "' is reserved");
    if (!seen.insert(n).second) throw Error("duplicate variable name '" + n + "'");
  }
}

std::vector<std::string> VarSpace::all() const {
  std::vector<std::string> out = independent_;
  out.insert(out.end(), dependent_.begin(), dependent_.end());
  out.insert(out.end(), parameters_.begin(), parameters_.end());
  return out;
}

bool VarSpace::contains(std::string_view name) const {
  auto has = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), name) != v.end(); };
  return has(independent_) || has(dependent_) || has(parameters_);
}

Layout::Layout(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (!index_.emplace(names_[i], i).second) throw Error("duplicate layout name '" + names_[i] + "'");
}

std::optional<std::size_t> Layout::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Layout::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw UnknownIdentifier(std::string(name));
  return *i;
}

std::vector<double> Layout::pack(const Point& p) const {
  std::vector<double> v(names_.size(), 0.0);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    auto it = p.find(names_[i]);
    if (it == p.end()) throw EvalError("variable '" + names_[i] + "' is not assigned");
    v[i] = it->second;
  }
  return v;
}

Point Layout::unpack(std::span<const double> v) const {
  Point p;
  for (std::size_t i = 0; i < names_.size(); ++i) p[names_[i]] = v[i];
  return p;
}

namespace {

void emit(const Expr& e, const Layout& layout, auto& code, std::size_t& depth, std::size_t& max_depth) {
  using Instr = std::remove_reference_t<decltype(code[0])>;
  switch (e.op()) {
    case Op::Const:
      code.push_back(Instr{Op::Const, 0, e.value()});
      max_depth = std::max(max_depth, ++depth);
      return;
    case Op::Var:
      code.push_back(Instr{Op::Var, static_cast<std::uint32_t>(layout.index(e.name())), 0.0});
      max_depth = std::max(max_depth, ++depth);
      return;
    default:
      break;
  }
  for (const auto& a : e.args()) emit(a, layout, code, depth, max_depth);
  auto n = static_cast<std::uint32_t>(e.args().size());
  code.push_back(Instr{e.op(), n, 0.0});
  depth -= n - 1;
}

[[noreturn]] void domain_fail(const char* what, double x) {
  throw EvalError(std::string(what) + " of " + std::to_string(x));
}

}  // namespace

CompiledExpr::CompiledExpr(const Expr& e, const Layout& layout) {
  std::size_t depth = 0;
  emit(e, layout, code_, depth, max_stack_);
}

double CompiledExpr::operator()(std::span<const double> slots) const {
  constexpr std::size_t kInline = 64;
  double inline_stack[kInline] = {};
  std::vector<double> heap;
  double* st = inline_stack;
  if (max_stack_ > kInline) {
    heap.resize(max_stack_);
    st = heap.data();
  }
  std::size_t sp = 0;
  for (const auto& in : code_) {
    switch (in.op) {
      case Op::Const:
        st[sp++] = in.value;
        break;
      case Op::Var:
        st[sp++] = slots[in.arg];
        break;
      case Op::Add: {
        double s = 0.0;
        for (std::uint32_t i = 0; i < in.arg; ++i) s += st[sp - in.arg + i];
        sp -= in.arg;
        st[sp++] = s;
        break;
      }
      case Op::Mul: {
        double s = 1.0;
        for (std::uint32_t i = 0; i < in.arg; ++i) s *= st[sp - in.arg + i];
        sp -= in.arg;
        st[sp++] = s;
        break;
      }
      case Op::Sub:
        st[sp - 2] -= st[sp - 1];
        --sp;
        break;
      case Op::Div:
        if (st[sp - 1] == 0.0) domain_fail("division by zero", st[sp - 2]);
        st[sp - 2] /= st[sp - 1];
        --sp;
        break;
      case Op::Pow: {
        double b = st[sp - 2];
        double x = st[sp - 1];
        if (b < 0.0 && std::floor(x) != x) domain_fail("non-integer power of negative base", b);
        if (b == 0.0 && x < 0.0) domain_fail("negative power of zero", b);
        st[sp - 2] = std::pow(b, x);
        --sp;
        break;
      }
      case Op::Neg:
        st[sp - 1] = -st[sp - 1];
        break;
      case Op::Sqrt:
        if (st[sp - 1] < 0.0) domain_fail("sqrt", st[sp - 1]);
        st[sp - 1] = std::sqrt(st[sp - 1]);
        break;
      case Op::Ln:
        if (!(st[sp - 1] > 0.0)) domain_fail("ln", st[sp - 1]);
        st[sp - 1] = std::log(st[sp - 1]);
        break;
      case Op::Abs:
        st[sp - 1] = std::abs(st[sp - 1]);
        break;
      case Op::Exp:
        st[sp - 1] = std::exp(st[sp - 1]);
        break;
      case Op::Sin:
        st[sp - 1] = std::sin(st[sp - 1]);
        break;
      case Op::Cos:
        st[sp - 1] = std::cos(st[sp - 1]);
        break;
    }
  }
  double r = st[0];
  if (!std::isfinite(r)) throw EvalError("non-finite result");
  return r;
}

double evaluate(const Expr& e, const Point& p) {
  std::set<std::string> vars = e.variables();
  Layout layout(std::vector<std::string>(vars.begin(), vars.end()));
  CompiledExpr c(e, layout);
  return c(layout.pack(p));
}

}  // namespace kwave
