#include "kwave/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace kwave {

Box& Box::set(const std::string& name, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("empty range for '" + name + "'");
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    names_.push_back(name);
    ranges_.push_back({lo, hi});
  } else {
    ranges_[static_cast<std::size_t>(it - names_.begin())] = {lo, hi};
  }
  return *this;
}

bool Box::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Interval& Box::operator[](std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DomainError("no range for '" + std::string(name) + "'");
  return ranges_[static_cast<std::size_t>(it - names_.begin())];
}

Point Box::center() const {
  Point p;
  for (std::size_t i = 0; i < names_.size(); ++i) p[names_[i]] = ranges_[i].mid();
  return p;
}

Point Box::sample(std::mt19937_64& rng) const {
  std::vector<double> v;
  sample_into(rng, v);
  return layout().unpack(v);
}

void Box::sample_into(std::mt19937_64& rng, std::vector<double>& slots) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  slots.resize(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    double r = u(rng);
    slots[i] = ranges_[i].lo + r * ranges_[i].width();
  }
}

Box Box::merged(const Box& other) const {
  Box b = *this;
  for (std::size_t i = 0; i < other.names_.size(); ++i)
    b.set(other.names_[i], other.ranges_[i].lo, other.ranges_[i].hi);
  return b;
}

Box Box::shrunk(double fraction) const {
  Box b = *this;
  for (auto& r : b.ranges_) {
    double pad = 0.5 * fraction * r.width();
    r = {r.lo + pad, r.hi - pad};
  }
  return b;
}

namespace {

double to_double(std::string_view s, std::string_view what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw DomainError("malformed number '" + std::string(s) + "' in " + std::string(what));
  return v;
}

std::string trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

Box Box::parse(std::string_view spec) {
  Box b;
  while (!spec.empty()) {
    auto comma = spec.find(',');
    std::string_view item = spec.substr(0, comma);
    spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
    if (trim(item).empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw DomainError("expected name=lo:hi in '" + std::string(item) + "'");
    std::string name = trim(item.substr(0, eq));
    std::string_view range = item.substr(eq + 1);
    auto colon = range.find(':');
    if (colon == std::string_view::npos) {
      b.fix(name, to_double(range, item));
    } else {
      b.set(name, to_double(range.substr(0, colon), item), to_double(range.substr(colon + 1), item));
    }
  }
  return b;
}

std::string Box::str() const {
  std::string out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (i) out += ',';
    char buf[64];
    out += names_[i] + "=";
    out.append(buf, std::to_chars(buf, buf + 64, ranges_[i].lo).ptr);
    if (ranges_[i].hi != ranges_[i].lo) {
      out += ':';
      out.append(buf, std::to_chars(buf, buf + 64, ranges_[i].hi).ptr);
    }
  }
  return out;
}

ZeroTest all_zero(const std::vector<Expr>& es, const Box& domain, const ZeroTestOptions& opt) {
  Layout layout = domain.layout();
  std::vector<CompiledExpr> code;
  for (const auto& e : es) {
    for (const auto& v : e.variables())
      if (!layout.find(v)) throw DomainError("variable '" + v + "' has no range in the domain");
    code.emplace_back(e, layout);
  }
  ZeroTest res;
  std::mt19937_64 rng(opt.seed);
  std::vector<double> slots;
  const int cap = opt.trials * opt.failure_factor;
  while (res.samples < opt.trials) {
    domain.sample_into(rng, slots);
    bool failed = false;
    for (std::size_t i = 0; i < code.size(); ++i) {
      double v = 0.0;
      try {
        v = code[i](slots);
      } catch (const EvalError&) {
        failed = true;
        break;
      }
      if (std::abs(v) > res.max_abs) res.max_abs = std::abs(v);
      if (std::abs(v) > opt.threshold) {
        res.verdict = ZeroVerdict::ProvablyNonzero;
        res.witness = layout.unpack(slots);
        res.value = v;
        ++res.samples;
        return res;
      }
    }
    if (failed) {
      if (++res.skipped > cap)
        throw DomainExhausted("too many samples hit singularities (" + std::to_string(res.skipped) + ")");
      continue;
    }
    ++res.samples;
  }
  return res;
}

ZeroTest is_zero(const Expr& e, const Box& domain, const ZeroTestOptions& opt) {
  return all_zero({e}, domain, opt);
}

}  // namespace kwave

namespace kwave {

Expr reduce_on(const Expr& e, const Box& domain, const ZeroTestOptions& opt) {
  if (e.is_constant()) return e;
  std::map<std::string, Expr> pins;
  bool all_pinned = true;
  for (const auto& v : e.variables()) {
    if (!domain.contains(v)) return e;
    if (!is_zero(diff(e, v), domain, opt).zero()) {
      all_pinned = false;
      continue;
    }
    const Interval& iv = domain[v];
    double pin = iv.lo <= 0.0 && 0.0 <= iv.hi ? 0.0 : iv.lo <= 1.0 && 1.0 <= iv.hi ? 1.0 : iv.mid();
    pins.emplace(v, Expr::constant(pin));
  }
  if (pins.empty()) return e;
  Expr out;
  try {
    out = substitute(e, pins);
    if (!all_pinned) return is_zero(out - e, domain, opt).zero() ? out : e;
    double value = evaluate(out, {});
    for (long long den = 1; den <= 64; ++den) {
      double num = std::round(value * static_cast<double>(den));
      if (std::abs(num / static_cast<double>(den) - value) <= 1e-14 * std::max(1.0, std::abs(value)))
        return Expr::rational(static_cast<long long>(num), den);
    }
    return Expr::constant(value);
  } catch (const EvalError&) {
    return e;
  } catch (const DomainExhausted&) {
    return e;
  }
}

}  // namespace kwave
