#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "kwave/expr.hpp"

namespace kwave {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
};

/// Axis-aligned box of variable ranges; a degenerate interval pins a value.
class Box {
public:
  Box() = default;
  Box& set(const std::string& name, double lo, double hi);
  Box& fix(const std::string& name, double value) { return set(name, value, value); }
  bool contains(std::string_view name) const;
  const Interval& operator[](std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  Layout layout() const { return Layout(names_); }

  Point center() const;
  Point sample(std::mt19937_64& rng) const;
  void sample_into(std::mt19937_64& rng, std::vector<double>& slots) const;
  /// Box merged with another; entries of `other` win.
  Box merged(const Box& other) const;
  Box shrunk(double fraction) const;

  /// Parses "t=1:3,y=0.2:0.9,c=2" (a single number fixes the value).
  static Box parse(std::string_view spec);
  std::string str() const;

private:
  std::vector<std::string> names_;
  std::vector<Interval> ranges_;
};

enum class ZeroVerdict { ProvablyNonzero, ProbablyZero };

struct ZeroTestOptions {
  int trials = 32;
  double threshold = 1e-9;
  std::uint64_t seed = 20240601;
  /// Evaluation failures tolerated per requested trial before giving up.
  int failure_factor = 8;
};

struct ZeroTest {
  ZeroVerdict verdict = ZeroVerdict::ProbablyZero;
  Point witness;
  double value = 0.0;
  double max_abs = 0.0;
  int samples = 0;
  int skipped = 0;
  bool zero() const { return verdict == ZeroVerdict::ProbablyZero; }
};

ZeroTest is_zero(const Expr& e, const Box& domain, const ZeroTestOptions& opt = {});

/// Samples several expressions at the same points; nonzero if any entry is.
ZeroTest all_zero(const std::vector<Expr>& es, const Box& domain, const ZeroTestOptions& opt = {});

}  // namespace kwave

namespace kwave {

/// Equivalent form on the box: variables the expression provably does not depend on are pinned
/// to a simple value (0, 1 or the interval midpoint); constants are recognized as small rationals.
Expr reduce_on(const Expr& e, const Box& domain, const ZeroTestOptions& opt = {});

}  // namespace kwave
