#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "kwave/expr.hpp"

namespace kwave {

namespace {

constexpr std::array<std::string_view, 7> kFunctions{"sqrt", "ln", "log", "exp", "abs", "sin", "cos"};

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

class Parser {
public:
  Parser(std::string_view text, const std::vector<std::string>& names)
      : s_(text), names_(names.begin(), names.end()) {}

  Expr run() {
    Expr e = expression();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, pos_); }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expression() {
    Expr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = lhs + term();
      else if (accept('-'))
        lhs = lhs - term();
      else
        return lhs;
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = lhs * unary();
      else if (accept('/'))
        lhs = lhs / unary();
      else
        return lhs;
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (accept('^')) return pow(base, unary());
    return base;
  }

  Expr number() {
    std::size_t start = pos_;
    bool is_int = true;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      is_int = false;
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        is_int = false;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    std::string_view tok = s_.substr(start, pos_ - start);
    if (tok == ".") {
      pos_ = start;
      fail("malformed number");
    }
    if (is_int && tok.size() <= 15) {
      std::int64_t v = 0;
      std::from_chars(tok.data(), tok.data() + tok.size(), v);
      return Expr::rational(v);
    }
    double v = 0.0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc()) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::constant(v);
  }

  Expr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (c == '(') {
      ++pos_;
      Expr e = expression();
      expect(')');
      return e;
    }
    if (c == '|') {
      ++pos_;
      Expr e = expression();
      expect('|');
      return abs(e);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string id(s_.substr(start, pos_ - start));
      for (auto f : kFunctions) {
        if (id != f) continue;
        if (!accept('(')) fail("function '" + id + "' requires an argument list");
        Expr arg = expression();
        expect(')');
        if (id == "sqrt") return sqrt(arg);
        if (id == "ln" || id == "log") return ln(arg);
        if (id == "exp") return exp(arg);
        if (id == "abs") return abs(arg);
        if (id == "sin") return sin(arg);
        return cos(arg);
      }
      if (!names_.count(id)) throw UnknownIdentifier(id);
      return Expr::variable(id);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  std::set<std::string, std::less<>> names_;
  std::size_t pos_ = 0;
};

// Binding strength used to decide where parentheses are needed.
enum Prec { kSum = 1, kProduct = 2, kUnary = 3, kPower = 4, kAtom = 5 };

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub:
      return kSum;
    case Op::Mul:
    case Op::Div:
      return kProduct;
    case Op::Neg:
      return kUnary;
    case Op::Pow:
      return kPower;
    case Op::Const: {
      if (e.value() < 0.0 || std::signbit(e.value())) return kUnary;
      auto q = e.exact();
      if (q && q->den != 1) return kProduct;
      return kAtom;
    }
    default:
      return kAtom;
  }
}

void print(const Expr& e, std::string& out);

void print_at(const Expr& e, int min_prec, std::string& out) {
  if (precedence(e) < min_prec) {
    out += '(';
    print(e, out);
    out += ')';
  } else {
    print(e, out);
  }
}

const char* function_name(Op op) {
  switch (op) {
    case Op::Sqrt:
      return "sqrt";
    case Op::Ln:
      return "ln";
    case Op::Abs:
      return "abs";
    case Op::Exp:
      return "exp";
    case Op::Sin:
      return "sin";
    case Op::Cos:
      return "cos";
    default:
      return "?";
  }
}

void print(const Expr& e, std::string& out) {
  const auto& a = e.args();
  switch (e.op()) {
    case Op::Const: {
      if (auto q = e.exact()) {
        out += std::to_string(q->num);
        if (q->den != 1) out += "/" + std::to_string(q->den);
      } else {
        out += shortest(e.value());
      }
      return;
    }
    case Op::Var:
      out += e.name();
      return;
    case Op::Add:
      print_at(a[0], kSum, out);
      for (std::size_t i = 1; i < a.size(); ++i) {
        const Expr& t = a[i];
        if (t.op() == Op::Neg) {
          out += " - ";
          print_at(t.args()[0], kProduct, out);
        } else if (t.is_constant() && t.value() < 0.0) {
          out += " - ";
          print_at(-t, kProduct, out);
        } else {
          out += " + ";
          print_at(t, kSum, out);
        }
      }
      return;
    case Op::Sub:
      print_at(a[0], kSum, out);
      out += " - ";
      print_at(a[1], kProduct, out);
      return;
    case Op::Mul:
      print_at(a[0], kProduct, out);
      for (std::size_t i = 1; i < a.size(); ++i) {
        out += '*';
        print_at(a[i], kPower, out);
      }
      return;
    case Op::Div:
      print_at(a[0], kProduct, out);
      out += '/';
      print_at(a[1], kPower, out);
      return;
    case Op::Pow:
      print_at(a[0], kAtom, out);
      out += '^';
      print_at(a[1], a[1].op() == Op::Pow ? kPower : kAtom, out);
      return;
    case Op::Neg:
      out += '-';
      print_at(a[0], kPower, out);
      return;
    default:
      out += function_name(e.op());
      out += '(';
      print(a[0], out);
      out += ')';
      return;
  }
}

}  // namespace

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

bool is_reserved_name(std::string_view s) {
  for (auto f : kFunctions)
    if (s == f) return true;
  return false;
}

Expr parse(std::string_view text, const std::vector<std::string>& names) { return Parser(text, names).run(); }

Expr parse(std::string_view text, const VarSpace& space) { return parse(text, space.all()); }

std::string Expr::str() const {
  std::string out;
  print(*this, out);
  return out;
}

std::string format_point(const Point& p) {
  std::string out = "{";
  bool first = true;
  for (const auto& [k, v] : p) {
    if (!first) out += ", ";
    first = false;
    out += k + "=" + shortest(v);
  }
  return out + "}";
}

}  // namespace kwave
