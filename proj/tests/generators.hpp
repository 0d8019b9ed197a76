#pragma once

#include <random>
#include <string>
#include <vector>

#include "kwave/expr.hpp"

namespace kwave::gen {

/// Random expressions that stay finite and smooth for arguments in [-2, 2].
class ExprGenerator {
public:
  ExprGenerator(std::vector<std::string> vars, std::uint64_t seed) : vars_(std::move(vars)), rng_(seed) {}

  Expr operator()(int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 10);
    int k = pick(rng_);
    if (k == 0) return leaf_const();
    if (k == 1) return leaf_var();
    Expr a = (*this)(depth - 1);
    switch (k) {
      case 2:
        return a + (*this)(depth - 1);
      case 3:
        return a - (*this)(depth - 1);
      case 4:
        return a * (*this)(depth - 1);
      case 5:
        return a / (pow(a.size() > 6 ? leaf_var() : (*this)(depth - 1), Expr::rational(2)) + Expr::rational(1));
      case 6:
        return sqrt(pow(a, Expr::rational(2)) + Expr::rational(1));
      case 7:
        return ln(pow(a, Expr::rational(2)) + Expr::rational(1));
      case 8:
        return exp(sin(a));
      case 9:
        return cos(a);
      default:
        return pow(a, Expr::rational(std::uniform_int_distribution<int>(2, 3)(rng_)));
    }
  }

  Expr leaf_var() {
    std::uniform_int_distribution<std::size_t> pick(0, vars_.size() - 1);
    return Expr::variable(vars_[pick(rng_)]);
  }

  Expr leaf_const() {
    std::uniform_int_distribution<int> pick(-5, 5);
    int n = pick(rng_);
    if (n == 0) return Expr::constant(0.5);
    return Expr::rational(n, std::uniform_int_distribution<int>(1, 3)(rng_));
  }

  std::mt19937_64& rng() { return rng_; }

private:
  std::vector<std::string> vars_;
  std::mt19937_64 rng_;
};

}  // namespace kwave::gen
