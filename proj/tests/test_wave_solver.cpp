#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kwave/fixtures.hpp"
#include "kwave/wave_solver.hpp"
#include "solver_fixtures.hpp"

using namespace kwave;
using namespace kwave::testing_support;

namespace {

// Smaller root of tau^2 - tau (tau0 + t) + t tau0 + 2 ln y (plus) and its mirror (minus).
double simple_wave_tau(double t, double y, double tau0, int sign) {
  return (t + sign * tau0 - std::sqrt((t - sign * tau0) * (t - sign * tau0) - 8 * std::log(y))) / 2;
}

}  // namespace

TEST(Grid, ParseAndOrder) {
  auto g = Grid::parse("t=1:3:3,x=0:1:2");
  EXPECT_EQ(g.size(), 6u);
  EXPECT_EQ(g.row_length(), 2u);
  EXPECT_EQ(g.point(0), (std::vector<double>{1, 0}));
  EXPECT_EQ(g.point(1), (std::vector<double>{1, 1}));
  EXPECT_EQ(g.point(2), (std::vector<double>{2, 0}));
  EXPECT_EQ(Grid::parse("t=2,x=0:1:5").size(), 5u);
  EXPECT_TRUE(Grid::parse("t=0:1:0").empty());
  EXPECT_TRUE(Grid::parse("").empty());
  EXPECT_THROW(Grid::parse("t=0:1"), SyntaxError);
  EXPECT_THROW(Grid::parse("t=0:1:2.5"), SyntaxError);
  EXPECT_THROW(Grid::parse("t=0:1:2,t=0:1:2"), SyntaxError);
}

TEST(Characteristic, ConstantAndLinearProfiles) {
  auto sys = load_fixture("example3").system;
  const auto& sp = sys.space();
  Eigen::VectorXd u0 = Eigen::VectorXd::Constant(1, 0.7);
  auto still = integrate_characteristic(sp, sys.parameter_values(), exprs({"0"}, sp), Expr::rational(1), "s", u0, 0,
                                        -1, 1);
  auto line = integrate_characteristic(sp, sys.parameter_values(), exprs({"c"}, sp), Expr::rational(1), "s", u0, 0,
                                       -1, 1);
  for (double s : {-1.0, -0.33, 0.0, 0.51, 1.0}) {
    Eigen::VectorXd tau = Eigen::VectorXd::Constant(1, s);
    EXPECT_DOUBLE_EQ(still.f(tau)(0), 0.7);
    EXPECT_NEAR(line.f(tau)(0), 0.7 + s, 1e-13);
    EXPECT_NEAR(line.df(tau)(0, 0), 1.0, 1e-8);
  }
  EXPECT_THROW(line.f(Eigen::VectorXd::Constant(1, 1.5)), EvalError);
}

TEST(Characteristic, BlowUpLeavesBox) {
  auto sys = load_fixture("example3").system;
  const auto& sp = sys.space();
  CharacteristicOptions opt;
  opt.u_box = Box::parse("u=-10:10");
  // u' = u^2 from u(0) = 1 blows up at s = 1.
  EXPECT_THROW(integrate_characteristic(sp, sys.parameter_values(), exprs({"u^2"}, sp), Expr::rational(1), "s",
                                        Eigen::VectorXd::Constant(1, 1.0), 0, 0, 2, opt),
               BlowUp);
}

TEST(SimpleWave, PlusBranchMatchesClosedForm) {
  auto sys = load_fixture("example2").system;
  const auto& sp = sys.space();
  Eigen::Vector2d u0(1, 2);
  auto surf = integrate_characteristic(sp, {}, exprs({"sqrt(u1)", "1"}, sp), Expr::rational(1), "s", u0, 2, 0.01, 8);
  EXPECT_LT(surf.tangency_defect, 1e-8);
  ImplicitSolver solver(sys, surf, {make_potential(sys, parse("t - ln(y)/sqrt(u1)", sp))}, {});
  for (double t : {4.0, 5.1, 6.0})
    for (double y : {1.2, 2.0, 3.0}) {
      std::vector<double> x{t, 1.5, y};
      // Both roots lie on the branch; the base guess lands on the larger one.
      auto far = solver.solve_from(x, solver.cold_start(x));
      ASSERT_TRUE(far.regular()) << t << " " << y;
      EXPECT_NEAR(far.tau(0), t - simple_wave_tau(t, y, 0.0, 1), 1e-8);
      auto p = solver.solve_from(x, Eigen::VectorXd::Constant(1, 0.02));
      ASSERT_TRUE(p.regular()) << t << " " << y;
      double tau = simple_wave_tau(t, y, 0.0, 1);
      EXPECT_NEAR(p.tau(0), tau, 1e-8);
      EXPECT_NEAR(p.u(0), tau * tau / 4, 1e-8);
      EXPECT_NEAR(p.u(1), tau, 1e-8);
    }
}

TEST(SimpleWave, MinusBranchMatchesClosedForm) {
  auto sys = load_fixture("example2").system;
  const auto& sp = sys.space();
  Eigen::Vector2d u0(1, -2);
  auto surf =
      integrate_characteristic(sp, {}, exprs({"-sqrt(u1)", "1"}, sp), Expr::rational(1), "s", u0, -2, -8, -0.01);
  ImplicitSolver solver(sys, surf, {make_potential(sys, parse("t + ln(y)/sqrt(u1)", sp))}, {});
  for (double t : {1.0, 2.2, 3.0})
    for (double y : {0.2, 0.5, 0.9}) {
      std::vector<double> x{t, 2.0, y};
      auto p = solver.solve_from(x, solver.cold_start(x));
      ASSERT_TRUE(p.regular()) << t << " " << y;
      double tau = simple_wave_tau(t, y, 0.0, -1);
      EXPECT_NEAR(p.tau(0), tau, 1e-8);
      EXPECT_NEAR(p.u(0), tau * tau / 4, 1e-8);
      EXPECT_NEAR(p.u(1), tau, 1e-8);
    }
}

TEST(Hodograph, DoubleWaveAnsatzAndFlowsAgree) {
  auto sys = load_fixture("example2").system;
  const auto& sp = sys.space();
  std::vector<std::string> taus{"tp", "tm"};
  std::vector<std::string> names = sp.all();
  names.insert(names.end(), taus.begin(), taus.end());
  ExprVec ansatz{parse("((tp - tm)/4)^2", names), parse("(tp + tm)/2", names)};
  std::vector<ExprVec> gammas{exprs({"sqrt(u1)", "1"}, sp), exprs({"-sqrt(u1)", "1"}, sp)};
  ExprMat mu{{Expr::rational(1, 2), Expr::rational(0)}, {Expr::rational(0), Expr::rational(1, 2)}};
  Box box = Box::parse("tp=3:5,tm=-1:1");
  Eigen::Vector2d base(4, 0), u0(1, 2);
  auto a = build_hodograph(sys, gammas, mu, taus, base, u0, box, ansatz);
  EXPECT_EQ(a.provenance, "ansatz");
  EXPECT_LT(a.swap_mismatch, 1e-7);
  auto f = build_hodograph(sys, gammas, mu, taus, base, u0, box);
  EXPECT_EQ(f.provenance, "flow");
  for (auto tau : {Eigen::Vector2d(3.5, 0.5), Eigen::Vector2d(4.8, -0.9)}) {
    Eigen::VectorXd want(2);
    want << std::pow((tau(0) - tau(1)) / 4, 2), (tau(0) + tau(1)) / 2;
    EXPECT_NEAR((a.f(tau) - want).cwiseAbs().maxCoeff(), 0.0, 1e-14);
    EXPECT_NEAR((f.f(tau) - want).cwiseAbs().maxCoeff(), 0.0, 1e-9);
    EXPECT_NEAR((f.df(tau) - a.df(tau)).cwiseAbs().maxCoeff(), 0.0, 1e-6);
  }
  ExprVec wrong{parse("((tp - tm)/4)^2", names), parse("tp", names)};
  EXPECT_THROW(build_hodograph(sys, gammas, mu, taus, base, u0, box, wrong), NonIntegrable);
}

TEST(Hodograph, NonCommutingFrameIsRejected) {
  auto sys = load_fixture("example2").system;
  const auto& sp = sys.space();
  ExprMat id{{Expr::rational(1), Expr::rational(0)}, {Expr::rational(0), Expr::rational(1)}};
  try {
    build_hodograph(sys, {exprs({"1", "0"}, sp), exprs({"0", "u1"}, sp)}, id, {"a", "b"}, Eigen::Vector2d(0, 0),
                    Eigen::Vector2d(1, 1), Box::parse("a=-1:1,b=-1:1"));
    ADD_FAILURE() << "expected NonIntegrable";
  } catch (const NonIntegrable& e) {
    // The orders differ by a*b in the second component.
    double a = e.witness().at("a"), b = e.witness().at("b");
    EXPECT_NEAR(e.mismatch(), std::abs(a * b), 1e-9);
  }
}

TEST(ImplicitSolve, Example3LeftRootFromFarGuess) {
  Example3 ex;
  ImplicitSolveConfig cfg;
  cfg.guess = GuessPolicy::Explicit;
  cfg.initial = Eigen::VectorXd::Constant(1, -100);
  ImplicitSolver solver(ex.sys, ex.surface, ex.phi, cfg);
  std::vector<double> x{0.5, 2, 3};
  auto p = solver.solve_from(x, solver.cold_start(x));
  ASSERT_TRUE(p.regular());
  const double t = 0.5, L = std::log(6.0), D = (1 + t) * (1 + t) + 4 * t * L;
  EXPECT_NEAR(p.u(0), -(std::sqrt(D) + t + 1) / (2 * t), 1e-8);
  EXPECT_NEAR(p.det, -std::sqrt(D), 1e-6);
}

TEST(ImplicitSolve, Example3RegularRootTendsToLogAsTimeVanishes) {
  Example3 ex;
  ImplicitSolver solver(ex.sys, ex.surface, ex.phi, {});
  for (double t : {0.3, 0.01, 1e-4}) {
    std::vector<double> x{t, 1.7, 2.4};
    auto p = solver.solve_from(x, solver.cold_start(x));
    ASSERT_TRUE(p.regular());
    const double L = std::log(1.7 * 2.4), D = (1 + t) * (1 + t) + 4 * t * L;
    EXPECT_NEAR(p.u(0), 2 * L / (std::sqrt(D) + t + 1), 1e-10);
    EXPECT_NEAR(p.u(0), L, 2 * t * L * L + 1e-12);
    EXPECT_NEAR(p.det, std::sqrt(D), 1e-6);
  }
}

TEST(ImplicitSolve, CatastropheBracketsCriticalTime) {
  Example3 ex;
  const double e1 = std::exp(-1.0);
  std::ostringstream spec;
  spec.precision(17);
  spec << "x=" << e1 << ",y=" << e1 << ",t=0.02:0.3:57";
  auto field = solve_implicit(ex.sys, ex.surface, ex.phi, Grid::parse(spec.str()), {});
  auto brackets = locate_catastrophe(field, "t");
  ASSERT_EQ(brackets.size(), 1u);
  const double t_star = 3 - 2 * std::sqrt(2.0);
  EXPECT_LE(brackets[0].lo, t_star);
  EXPECT_GE(brackets[0].hi, t_star);
  EXPECT_NEAR(brackets[0].hi - brackets[0].lo, 0.005, 1e-12);
  for (const auto& p : field.points)
    if (p.x[0] < t_star) EXPECT_TRUE(p.regular()) << p.x[0];
}

TEST(ImplicitSolve, DoubleWaveOnGridMatchesFixture) {
  auto file = load_fixture("example2");
  const auto& sys = file.system;
  const auto& sp = sys.space();
  std::vector<std::string> taus{"tp", "tm"};
  std::vector<std::string> names = sp.all();
  names.insert(names.end(), taus.begin(), taus.end());
  ExprVec ansatz{parse("((tp - tm)/4)^2", names), parse("(tp + tm)/2", names)};
  ExprMat mu{{Expr::rational(1, 2), Expr::rational(0)}, {Expr::rational(0), Expr::rational(1, 2)}};
  auto surf = build_hodograph(sys, {exprs({"sqrt(u1)", "1"}, sp), exprs({"-sqrt(u1)", "1"}, sp)}, mu, taus,
                              Eigen::Vector2d(4, 0), Eigen::Vector2d(1, 2), Box::parse("tp=3:5,tm=-1:1"), ansatz);
  std::vector<ImplicitPotential> phi{make_potential(sys, parse("t - ln(abs(y))/sqrt(u1) + sqrt(u1)", sp)),
                                     make_potential(sys, parse("t + ln(abs(y))/sqrt(u1) - sqrt(u1)", sp))};
  auto field = solve_implicit(sys, surf, phi, Grid::parse("t=1:3:5,x=1:3:3,y=0.2:0.9:5"), {});
  ASSERT_EQ(field.converged(), field.points.size());
  auto ref = double_wave_fixture();
  for (const auto& p : field.points) {
    auto q = ref.resolve(p.x, p.tau);
    ASSERT_TRUE(q);
    EXPECT_NEAR((p.u - q->u).cwiseAbs().maxCoeff(), 0.0, 1e-10);
    EXPECT_NEAR(p.det, 1.0, 1e-10);
  }
}

TEST(DoubleWaveFixture, ValuesAndExport) {
  auto field = double_wave_fixture();
  EXPECT_EQ(field.points.size(), 8000u);
  auto p = field.resolve({2, 5, 0.5}, Eigen::VectorXd());
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->u(0), std::log(2.0), 1e-15);
  EXPECT_NEAR(p->u(1), 2.0, 1e-15);
  EXPECT_NEAR(p->det, 1.0, 1e-12);

  std::ostringstream out;
  field.write_tsv(out);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "t\tx\ty\ttp\ttm\tu1\tu2\tnewton_residual\tpde_residual\tdet\titerations\tstatus");
  std::size_t rows = 0;
  while (std::getline(in, row)) ++rows;
  EXPECT_EQ(rows, 8000u);
}
