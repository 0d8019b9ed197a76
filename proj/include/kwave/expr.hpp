#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kwave/error.hpp"

namespace kwave {

enum class Op : std::uint8_t { Const, Var, Add, Mul, Sub, Div, Pow, Neg, Sqrt, Ln, Abs, Exp, Sin, Cos };

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

struct Node;

/// Immutable symbolic scalar expression. Copies share the underlying tree.
class Expr {
public:
  Expr();
  static Expr constant(double v);
  static Expr rational(std::int64_t num, std::int64_t den = 1);
  static Expr variable(std::string name);
  static Expr make(Op op, std::vector<Expr> args);

  Op op() const;
  bool is_constant() const { return op() == Op::Const; }
  bool is_const_value(double v) const;
  bool is_zero_constant() const { return is_const_value(0.0); }
  double value() const;
  std::optional<Rational> exact() const;
  const std::string& name() const;
  const std::vector<Expr>& args() const;
  std::size_t size() const;

  bool depends_on(std::string_view var) const;
  void collect_variables(std::set<std::string>& out) const;
  std::set<std::string> variables() const;

  std::string str() const;

  friend bool operator==(const Expr& a, const Expr& b);
  friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator+(const Expr& a, double b);
Expr operator+(double a, const Expr& b);
Expr operator-(const Expr& a, double b);
Expr operator-(double a, const Expr& b);
Expr operator*(const Expr& a, double b);
Expr operator*(double a, const Expr& b);
Expr operator/(const Expr& a, double b);
Expr operator/(double a, const Expr& b);

Expr add(std::vector<Expr> terms);
Expr mul(std::vector<Expr> factors);
Expr pow(const Expr& base, const Expr& exponent);
Expr pow(const Expr& base, double exponent);
Expr sqrt(const Expr& e);
Expr ln(const Expr& e);
Expr abs(const Expr& e);
Expr exp(const Expr& e);
Expr sin(const Expr& e);
Expr cos(const Expr& e);

Expr diff(const Expr& e, std::string_view var);
Expr substitute(const Expr& e, const std::map<std::string, Expr>& repl);

using ExprVec = std::vector<Expr>;
using ExprMat = std::vector<ExprVec>;

/// Ordered variable names of an analysis: independent, dependent, parameters.
class VarSpace {
public:
  VarSpace() = default;
  VarSpace(std::vector<std::string> independent, std::vector<std::string> dependent,
           std::vector<std::string> parameters = {});

  const std::vector<std::string>& independent() const { return independent_; }
  const std::vector<std::string>& dependent() const { return dependent_; }
  const std::vector<std::string>& parameters() const { return parameters_; }
  std::vector<std::string> all() const;
  bool contains(std::string_view name) const;

private:
  std::vector<std::string> independent_;
  std::vector<std::string> dependent_;
  std::vector<std::string> parameters_;
};

bool is_identifier(std::string_view s);
bool is_reserved_name(std::string_view s);

Expr parse(std::string_view text, const VarSpace& space);
Expr parse(std::string_view text, const std::vector<std::string>& names);

/// Maps variable names to slots of a flat numeric vector.
class Layout {
public:
  Layout() = default;
  explicit Layout(std::vector<std::string> names);
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;
  std::vector<double> pack(const Point& p) const;
  Point unpack(std::span<const double> v) const;

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Postfix program for fast repeated evaluation over a fixed Layout.
class CompiledExpr {
public:
  CompiledExpr() = default;
  CompiledExpr(const Expr& e, const Layout& layout);
  double operator()(std::span<const double> slots) const;

private:
  struct Instr {
    Op op;
    std::uint32_t arg;
    double value;
  };
  std::vector<Instr> code_;
  std::size_t max_stack_ = 0;
};

double evaluate(const Expr& e, const Point& p);

}  // namespace kwave
