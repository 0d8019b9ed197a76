#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "generators.hpp"
#include "kwave/domain.hpp"
#include "kwave/expr.hpp"

using namespace kwave;

namespace {

const std::vector<std::string> kXYZ{"x", "y", "z"};

double central(const Expr& e, Point p, const std::string& v, double h) {
  Point a = p, b = p;
  a[v] += h;
  b[v] -= h;
  return (evaluate(e, a) - evaluate(e, b)) / (2 * h);
}

}  // namespace

TEST(Parse, ProductEvaluates) {
  VarSpace s({"x"}, {"u1"});
  Expr e = parse("x*u1", s);
  EXPECT_EQ(e.op(), Op::Mul);
  EXPECT_DOUBLE_EQ(evaluate(e, {{"x", 2}, {"u1", 3}}), 6.0);
}

TEST(Parse, BrownianCoefficient) {
  VarSpace s({"t", "x"}, {"a", "c"}, {"b"});
  Expr e = parse("(1+b^2*x^2)", s);
  Expr ref = Expr::rational(1) + pow(Expr::variable("b"), 2.0) * pow(Expr::variable("x"), 2.0);
  EXPECT_EQ(e, ref);
  EXPECT_DOUBLE_EQ(evaluate(e, {{"b", 0.5}, {"x", 2}}), 2.0);
}

TEST(Parse, AbsBarsInsideLn) {
  VarSpace s({"y"}, {});
  Expr e = parse("ln(|y|)", s);
  EXPECT_EQ(e.op(), Op::Ln);
  EXPECT_EQ(e.args()[0].op(), Op::Abs);
  EXPECT_NEAR(evaluate(e, {{"y", -std::numbers::e}}), 1.0, 1e-15);
}

TEST(Parse, Precedence) {
  std::vector<std::string> v{"x"};
  EXPECT_DOUBLE_EQ(evaluate(parse("2^3^2", v), {}), 512.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("-2^2", v), {}), -4.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("2^-1", v), {}), 0.5);
  EXPECT_DOUBLE_EQ(evaluate(parse("8/2/2", v), {}), 2.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("1 - 2 - 3", v), {}), -4.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("2*x^2 + 1", v), {{"x", 3}}), 19.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("1.5e1 + .5", v), {}), 15.5);
}

TEST(Parse, SyntaxErrorOffset) {
  std::vector<std::string> v{"x"};
  try {
    parse("x + * 2", v);
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(parse("(x + 1", v), SyntaxError);
  EXPECT_THROW(parse("x 1", v), SyntaxError);
  EXPECT_THROW(parse("sqrt x", v), SyntaxError);
}

TEST(Parse, UnknownIdentifierNamed) {
  try {
    parse("x + w", std::vector<std::string>{"x"});
    FAIL();
  } catch (const UnknownIdentifier& e) {
    EXPECT_EQ(e.name(), "w");
  }
}

TEST(Parse, IntegersAreExact) {
  Expr e = parse("1/3 + 1/6", std::vector<std::string>{});
  auto q = e.exact();
  ASSERT_TRUE(q.has_value());
  EXPECT_EQ(q->num, 1);
  EXPECT_EQ(q->den, 2);
}

TEST(VarSpaceTest, RejectsDuplicates) {
  EXPECT_THROW(VarSpace({"x"}, {"x"}), Error);
  EXPECT_THROW(VarSpace({"sqrt"}, {}), Error);
  VarSpace s({"t", "x"}, {"u"}, {"k"});
  EXPECT_EQ(s.all().size(), 4u);
}

TEST(Diff, ProductRule) {
  VarSpace s({"x"}, {"u1"});
  Expr d = diff(parse("x*u1", s), "x");
  EXPECT_EQ(d, Expr::variable("u1"));
}

TEST(Diff, SqrtAgainstFiniteDifference) {
  Expr e = parse("sqrt(u1)", std::vector<std::string>{"u1"});
  Expr d = diff(e, "u1");
  double fd = central(e, {{"u1", 4.0}}, "u1", 1e-6);
  EXPECT_NEAR(evaluate(d, {{"u1", 4.0}}), 0.25, 1e-15);
  EXPECT_NEAR(fd, 0.25, 1e-9);
}

TEST(Diff, ConstantIsZero) {
  EXPECT_TRUE(diff(Expr::rational(7), "x").is_zero_constant());
  EXPECT_TRUE(diff(parse("y^2*sin(y)", kXYZ), "x").is_zero_constant());
}

TEST(Simplify, Identities) {
  Expr x = Expr::variable("x");
  EXPECT_EQ(x + Expr::rational(0), x);
  EXPECT_EQ(x * Expr::rational(1), x);
  EXPECT_TRUE((x * Expr::rational(0)).is_zero_constant());
  EXPECT_TRUE((x - x).is_zero_constant());
  EXPECT_EQ((x / x), Expr::rational(1));
  EXPECT_EQ(pow(x, 1.0), x);
  Expr nested = (x + Expr::variable("y")) + (Expr::variable("z") + Expr::rational(2));
  EXPECT_EQ(nested.op(), Op::Add);
  EXPECT_EQ(nested.args().size(), 4u);
  EXPECT_EQ(sqrt(Expr::rational(9, 4)), Expr::rational(3, 2));
}

TEST(Eval, DomainErrors) {
  std::vector<std::string> v{"x"};
  EXPECT_THROW(evaluate(parse("sqrt(x)", v), {{"x", -1}}), EvalError);
  EXPECT_THROW(evaluate(parse("ln(x)", v), {{"x", 0}}), EvalError);
  EXPECT_THROW(evaluate(parse("1/x", v), {{"x", 0}}), EvalError);
  EXPECT_THROW(evaluate(parse("x^0.5", v), {{"x", -2}}), EvalError);
  EXPECT_DOUBLE_EQ(evaluate(parse("x^3", v), {{"x", -2}}), -8.0);
  EXPECT_THROW(evaluate(parse("x", v), {}), EvalError);
}

TEST(Print, RoundTripExamples) {
  for (const char* s : {"x - (y - z)", "x/(y*z)", "(x/y)*z", "-(x + y)", "x^(y^z)", "(x^y)^z", "x^(-1)",
                        "-x^2", "2*x/3", "1/2*x", "abs(x - 1)", "0.25*x + 1e-07"}) {
    Expr e = parse(s, kXYZ);
    Expr back = parse(e.str(), kXYZ);
    Point p{{"x", 1.3}, {"y", 0.7}, {"z", 1.9}};
    EXPECT_DOUBLE_EQ(evaluate(e, p), evaluate(back, p)) << s << " -> " << e.str();
  }
}

TEST(ZeroTestTest, Examples) {
  Box b;
  b.set("u1", 1, 4);
  Expr e = parse("sqrt(u1)*(1/sqrt(u1)) - 1", std::vector<std::string>{"u1"});
  auto r = is_zero(e, b);
  EXPECT_EQ(r.verdict, ZeroVerdict::ProbablyZero);
  EXPECT_EQ(r.samples, 32);

  Box b2;
  b2.set("x", 1, 2).set("u1", 1, 2);
  auto r2 = is_zero(parse("x*u1", std::vector<std::string>{"x", "u1"}), b2);
  EXPECT_EQ(r2.verdict, ZeroVerdict::ProvablyNonzero);
  EXPECT_GT(std::abs(r2.value), 1e-9);
  EXPECT_EQ(r2.witness.size(), 2u);
}

TEST(ZeroTestTest, ExhaustsOnSingularDomain) {
  Box b;
  b.set("x", -2, -1);
  EXPECT_THROW(is_zero(parse("sqrt(x)", std::vector<std::string>{"x"}), b), DomainExhausted);
}

TEST(ZeroTestTest, SkipsOccasionalSingularities) {
  Box b;
  b.set("x", -0.1, 4);
  auto r = is_zero(parse("sqrt(x)^2 - x", std::vector<std::string>{"x"}), b);
  EXPECT_EQ(r.verdict, ZeroVerdict::ProbablyZero);
  EXPECT_EQ(r.samples, 32);
}

TEST(BoxTest, ParseSpec) {
  Box b = Box::parse("t=1:3, y=0.2:0.9,c=2");
  EXPECT_EQ(b.size(), 3u);
  EXPECT_DOUBLE_EQ(b["y"].hi, 0.9);
  EXPECT_DOUBLE_EQ(b["c"].lo, 2.0);
  EXPECT_THROW(Box::parse("t=3:1"), DomainError);
  EXPECT_THROW(Box::parse("t"), DomainError);
}

TEST(ExprProperties, DiffMatchesCentralDifference) {
  gen::ExprGenerator gen(kXYZ, 11);
  std::uniform_real_distribution<double> coord(-1.5, 1.5);
  int checked = 0;
  for (int n = 0; n < 60; ++n) {
    Expr e = gen(6);
    for (const auto& v : kXYZ) {
      Expr d = diff(e, v);
      for (int k = 0; k < 20; ++k) {
        Point p{{"x", coord(gen.rng())}, {"y", coord(gen.rng())}, {"z", coord(gen.rng())}};
        double exact = evaluate(d, p);
        double fd = central(e, p, v, 1e-6);
        double scale = std::max({1.0, std::abs(exact), 1e-6 * std::abs(evaluate(e, p))});
        EXPECT_LE(std::abs(exact - fd), 1e-4 * scale) << e.str() << " d/d" << v;
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 60 * 3 * 20);
}

TEST(ExprProperties, PrintParseRoundTrip) {
  gen::ExprGenerator gen(kXYZ, 12);
  std::uniform_real_distribution<double> coord(-1.5, 1.5);
  for (int n = 0; n < 100; ++n) {
    Expr e = gen(6);
    Expr back = parse(e.str(), kXYZ);
    for (int k = 0; k < 20; ++k) {
      Point p{{"x", coord(gen.rng())}, {"y", coord(gen.rng())}, {"z", coord(gen.rng())}};
      double a = evaluate(e, p);
      double b = evaluate(back, p);
      EXPECT_LE(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(a))) << e.str();
    }
  }
}

TEST(ExprProperties, DiffOfAbsentVariableIsZeroConstant) {
  gen::ExprGenerator gen({"x", "y"}, 13);
  for (int n = 0; n < 100; ++n) EXPECT_TRUE(diff(gen(6), "z").is_zero_constant());
}

TEST(ExprProperties, SelfDifferenceIsZero) {
  gen::ExprGenerator gen(kXYZ, 14);
  Box b;
  b.set("x", -1.5, 1.5).set("y", -1.5, 1.5).set("z", -1.5, 1.5);
  for (int n = 0; n < 100; ++n) {
    Expr e = gen(6);
    EXPECT_TRUE(is_zero(e - e, b).zero());
    EXPECT_TRUE(is_zero(Expr::make(Op::Sub, {e, e}), b).zero()) << e.str();
  }
}
