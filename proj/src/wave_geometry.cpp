#include "kwave/wave_geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "kwave/antiderivative.hpp"
#include "kwave/linalg.hpp"

namespace kwave {

namespace {

std::vector<CompiledExpr> compile_all(const ExprVec& v, const Layout& layout) {
  std::vector<CompiledExpr> out;
  out.reserve(v.size());
  for (const auto& e : v) out.emplace_back(e, layout);
  return out;
}

Eigen::VectorXd eval_all(const std::vector<CompiledExpr>& c, std::span<const double> slots) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) out(static_cast<Eigen::Index>(i)) = c[i](slots);
  return out;
}

/// Calls fn(slots) at `count` successful random points of the box (evaluation errors are skipped).
template <class Fn>
void for_samples(const Box& box, std::uint64_t seed, int count, int failure_factor, Fn&& fn) {
  std::mt19937_64 rng(seed);
  std::vector<double> slots;
  int ok = 0, failed = 0;
  while (ok < count) {
    box.sample_into(rng, slots);
    try {
      if (!fn(slots)) return;
    } catch (const EvalError&) {
      if (++failed > count * failure_factor) throw DomainExhausted("too many samples hit singularities");
      continue;
    }
    ++ok;
  }
}

void check_variables(const ExprVec& v, const Box& box) {
  for (const auto& e : v)
    for (const auto& name : e.variables())
      if (!box.contains(name)) throw DomainError("variable '" + name + "' has no range in the domain");
}

bool parallel(const ExprVec& a, const ExprVec& b, const Box& box, const ZeroTestOptions& opt) {
  ExprVec minors;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) minors.push_back(a[i] * b[j] - a[j] * b[i]);
  return minors.empty() || all_zero(minors, box, opt).zero();
}

ExprMat minor_matrix(const ExprMat& m, std::size_t skip_row, std::size_t skip_col) {
  ExprMat out;
  for (std::size_t r = 0; r < m.size(); ++r) {
    if (r == skip_row) continue;
    ExprVec row;
    for (std::size_t c = 0; c < m[r].size(); ++c)
      if (c != skip_col) row.push_back(m[r][c]);
    out.push_back(std::move(row));
  }
  return out;
}

void combinations(std::size_t n, std::size_t k, std::size_t start, std::vector<std::size_t>& cur,
                  std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() == k) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = start; i < n; ++i) {
    cur.push_back(i);
    combinations(n, k, i + 1, cur, out);
    cur.pop_back();
  }
}

std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  combinations(n, k, 0, cur, out);
  return out;
}

ConditionVerdict verdict_from(const ZeroTest& z, const std::string& detail) {
  ConditionVerdict v;
  v.checks = 1;
  v.defect = z.max_abs;
  if (!z.zero()) {
    v.verdict = Verdict::Fails;
    v.defect = std::abs(z.value);
    v.witness = z.witness;
    v.detail = detail;
  }
  return v;
}

/// Folds a sub-check into an aggregate verdict: the first failure wins.
void merge(ConditionVerdict& into, const ConditionVerdict& v) {
  into.checks += v.checks;
  if (into.verdict == Verdict::Fails) return;
  if (v.verdict == Verdict::Fails) {
    int checks = into.checks;
    into = v;
    into.checks = checks;
    return;
  }
  if (v.verdict == Verdict::Inconclusive) {
    into.verdict = Verdict::Inconclusive;
    if (into.detail.empty()) into.detail = v.detail;
  }
  into.defect = std::max(into.defect, v.defect);
}

Json point_json(const Point& p) {
  Json j = Json::object();
  for (const auto& [k, v] : p) j[k] = v;
  return j;
}

}  // namespace

Box analysis_box(const QuasilinearSystem& sys, const Box& domain) {
  Box b = domain;
  for (const auto& [k, v] : sys.parameter_values())
    if (!b.contains(k)) b.fix(k, v);
  return b;
}

Expr determinant(const ExprMat& m) {
  const std::size_t n = m.size();
  if (n == 0) return Expr::rational(1);
  if (n == 1) return m[0][0];
  if (n == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
  ExprVec terms;
  for (std::size_t c = 0; c < n; ++c) {
    if (m[0][c].is_zero_constant()) continue;
    Expr t = m[0][c] * determinant(minor_matrix(m, 0, c));
    terms.push_back(c % 2 == 0 ? t : -t);
  }
  return add(std::move(terms));
}

ZeroTest wave_relation(const QuasilinearSystem& sys, const ExprVec& lambda, const ExprVec& gamma, const Box& domain,
                       const ZeroTestOptions& opt) {
  if (gamma.size() != sys.q()) throw Error("characteristic vector has wrong length");
  ExprMat s = sys.symbol(lambda);
  ExprVec rows;
  for (const auto& row : s) {
    ExprVec terms;
    for (std::size_t c = 0; c < row.size(); ++c) terms.push_back(row[c] * gamma[c]);
    rows.push_back(add(std::move(terms)));
  }
  return all_zero(rows, analysis_box(sys, domain), opt);
}

std::vector<KernelVector> kernel_elements(const QuasilinearSystem& sys, const ExprVec& lambda, const Box& domain,
                                          const GeometryOptions& opt) {
  if (!sys.properly_determined()) throw Error("kernel elements need a properly determined system");
  if (lambda.size() != sys.p()) throw Error("covector has wrong length");
  Box box = analysis_box(sys, domain);
  if (all_zero(lambda, box, opt.zero).zero()) throw Error("covector vanishes identically");
  const std::size_t q = sys.q();
  ExprMat s = sys.symbol(lambda);
  Layout layout = box.layout();

  auto symbolic_vector = [&](ExprVec v) {
    auto code = std::make_shared<std::vector<CompiledExpr>>(compile_all(v, layout));
    KernelVector k;
    k.symbolic = std::move(v);
    k.sample = [code, layout](const Point& p) { return eval_all(*code, layout.pack(p)); };
    return k;
  };

  std::vector<KernelVector> out;
  if (q <= 3) {
    auto z = is_zero(determinant(s), box, opt.zero);
    if (!z.zero())
      throw EmptyKernel("covector is not characteristic: determinant " + std::to_string(z.value) + " at " +
                        format_point(z.witness));
    ExprVec flat;
    for (const auto& row : s) flat.insert(flat.end(), row.begin(), row.end());
    if (all_zero(flat, box, opt.zero).zero()) {
      for (std::size_t i = 0; i < q; ++i) {
        ExprVec e(q, Expr::rational(0));
        e[i] = Expr::rational(1);
        out.push_back(symbolic_vector(std::move(e)));
      }
      return out;
    }
    // Columns of the adjugate lie in the kernel.
    std::vector<ExprVec> columns;
    for (std::size_t j = 0; j < q; ++j) {
      ExprVec col(q);
      for (std::size_t i = 0; i < q; ++i) {
        Expr cof = determinant(minor_matrix(s, j, i));
        col[i] = (i + j) % 2 == 0 ? cof : -cof;
      }
      if (!all_zero(col, box, opt.zero).zero()) columns.push_back(std::move(col));
    }
    std::stable_sort(columns.begin(), columns.end(), [](const ExprVec& a, const ExprVec& b) {
      std::size_t sa = 0, sb = 0;
      for (const auto& e : a) sa += e.size();
      for (const auto& e : b) sb += e.size();
      return sa < sb;
    });
    std::vector<ExprVec> kept;
    for (auto& c : columns) {
      bool dup = false;
      for (const auto& k : kept)
        if (parallel(c, k, box, opt.zero)) {
          dup = true;
          break;
        }
      if (!dup) kept.push_back(std::move(c));
    }
    if (!kept.empty()) {
      for (auto& k : kept) out.push_back(symbolic_vector(std::move(k)));
      return out;
    }
  }

  // Numeric samplers from the SVD null space.
  SystemEvaluator ev(sys);
  auto lam = std::make_shared<std::vector<CompiledExpr>>(compile_all(lambda, ev.layout()));
  auto numeric_symbol = [&sys, lam](const SystemEvaluator& e, std::span<const double> slots) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sys.m()), static_cast<Eigen::Index>(sys.q()));
    for (std::size_t i = 0; i < sys.p(); ++i) m += (*lam)[i](slots) * e.A(i, slots);
    return m;
  };
  std::size_t dim = 0;
  bool any_singular = false;
  for_samples(box, opt.zero.seed, 10, opt.zero.failure_factor, [&](std::span<const double> slots) {
    Point pt = layout.unpack(slots);
    Eigen::MatrixXd m = numeric_symbol(ev, ev.slots(pt));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    std::size_t d = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) <= opt.independence_threshold * std::max(1.0, sv(0))) ++d;
    if (d > 0) any_singular = true;
    dim = std::max(dim, d);
    return true;
  });
  if (!any_singular) throw EmptyKernel("covector is not characteristic: symbol invertible at all samples");
  auto sys_copy = std::make_shared<QuasilinearSystem>(sys);
  for (std::size_t j = 0; j < dim; ++j) {
    KernelVector k;
    k.sample = [sys_copy, lam, j, dim](const Point& p) {
      SystemEvaluator e(*sys_copy);
      auto slots = e.slots(p);
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sys_copy->m()),
                                                static_cast<Eigen::Index>(sys_copy->q()));
      for (std::size_t i = 0; i < sys_copy->p(); ++i) m += (*lam)[i](slots) * e.A(i, slots);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
      const Eigen::Index n = m.cols();
      Eigen::VectorXd v = svd.matrixV().col(n - static_cast<Eigen::Index>(dim) + static_cast<Eigen::Index>(j));
      Eigen::Index big = 0;
      v.cwiseAbs().maxCoeff(&big);
      if (v(big) < 0) v = -v;
      return v;
    };
    out.push_back(std::move(k));
  }
  return out;
}

ExprVec derivative_along(const ExprVec& v, const ExprVec& field, const std::vector<std::string>& wrt) {
  if (field.size() != wrt.size()) throw Error("field length does not match the variable list");
  ExprVec out;
  for (const auto& e : v) {
    ExprVec terms;
    for (std::size_t j = 0; j < wrt.size(); ++j)
      if (!field[j].is_zero_constant() && e.depends_on(wrt[j])) terms.push_back(field[j] * diff(e, wrt[j]));
    out.push_back(add(std::move(terms)));
  }
  return out;
}

ExprVec lie_bracket(const ExprVec& a, const ExprVec& b, const std::vector<std::string>& wrt) {
  if (a.size() != b.size()) throw Error("bracket of vectors with different lengths");
  ExprVec ab = derivative_along(b, a, wrt);
  ExprVec ba = derivative_along(a, b, wrt);
  ExprVec out;
  for (std::size_t k = 0; k < a.size(); ++k) out.push_back(ab[k] - ba[k]);
  return out;
}

void require_independent(const std::vector<ExprVec>& vectors, const Box& domain, const GeometryOptions& opt,
                         const std::string& what) {
  if (vectors.empty()) return;
  const std::size_t n = vectors[0].size();
  for (const auto& v : vectors) check_variables(v, domain);
  if (vectors.size() > n) throw DegenerateFrame(what + ": more vectors than dimensions", domain.center());
  Layout layout = domain.layout();
  std::vector<std::vector<CompiledExpr>> code;
  for (const auto& v : vectors) code.push_back(compile_all(v, layout));
  for_samples(domain, opt.zero.seed ^ 0x9e3779b97f4a7c15ULL, opt.independence_samples, opt.zero.failure_factor,
              [&](std::span<const double> slots) {
                Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(vectors.size()));
                for (std::size_t j = 0; j < vectors.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = eval_all(code[j], slots);
                double s = smallest_singular_value(m);
                if (!(s > opt.independence_threshold))
                  throw DegenerateFrame(what + ": smallest singular value " + std::to_string(s), layout.unpack(slots));
                return true;
              });
}

BracketDecomposition decompose_in_frame(const ExprVec& v, const std::vector<ExprVec>& frame, const Box& domain,
                                        const GeometryOptions& opt) {
  const std::size_t k = frame.size();
  const std::size_t n = v.size();
  for (const auto& f : frame)
    if (f.size() != n) throw Error("frame vector has wrong length");
  check_variables(v, domain);
  require_independent(frame, domain, opt, "frame");
  BracketDecomposition out;
  Layout layout = domain.layout();

  if (k <= 3) {
    // Cramer's rule on the row subset with the largest minor at the centre of the domain.
    std::vector<std::vector<CompiledExpr>> code;
    for (const auto& f : frame) code.push_back(compile_all(f, layout));
    Eigen::MatrixXd fm(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    bool have = false;
    for_samples(domain, opt.zero.seed, 1, opt.zero.failure_factor, [&](std::span<const double>) {
      auto c = layout.pack(domain.center());
      try {
        for (std::size_t j = 0; j < k; ++j) fm.col(static_cast<Eigen::Index>(j)) = eval_all(code[j], c);
        have = true;
        return true;
      } catch (const EvalError&) {
      }
      std::mt19937_64 rng(opt.zero.seed);
      std::vector<double> s;
      for (int tries = 0; tries < 64 && !have; ++tries) {
        domain.sample_into(rng, s);
        try {
          for (std::size_t j = 0; j < k; ++j) fm.col(static_cast<Eigen::Index>(j)) = eval_all(code[j], s);
          have = true;
        } catch (const EvalError&) {
        }
      }
      return true;
    });
    if (!have) throw DomainExhausted("frame cannot be evaluated on the domain");
    std::vector<std::size_t> best;
    double best_det = -1;
    for (const auto& rows : combinations(n, k)) {
      Eigen::MatrixXd sub(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
      for (std::size_t r = 0; r < k; ++r) sub.row(static_cast<Eigen::Index>(r)) = fm.row(static_cast<Eigen::Index>(rows[r]));
      double d = std::abs(sub.determinant());
      if (d > best_det) {
        best_det = d;
        best = rows;
      }
    }
    ExprMat sub(k, ExprVec(k));
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < k; ++j) sub[r][j] = frame[j][best[r]];
    Expr det = determinant(sub);
    for (std::size_t j = 0; j < k; ++j) {
      ExprMat rep = sub;
      for (std::size_t r = 0; r < k; ++r) rep[r][j] = v[best[r]];
      Expr num = determinant(rep);
      if (num.is_zero_constant() || is_zero(num, domain, opt.zero).zero())
        out.coefficients.push_back(Expr::rational(0));
      else
        out.coefficients.push_back(reduce_on(num / det, domain, opt.zero));
    }
    for (std::size_t i = 0; i < n; ++i) {
      ExprVec terms{v[i]};
      for (std::size_t j = 0; j < k; ++j) terms.push_back(-(out.coefficients[j] * frame[j][i]));
      out.residual.push_back(add(std::move(terms)));
    }
    out.residual_test = all_zero(out.residual, domain, opt.zero);
    return out;
  }

  // Numeric least squares at the samples.
  out.symbolic = false;
  auto vc = compile_all(v, layout);
  std::vector<std::vector<CompiledExpr>> code;
  for (const auto& f : frame) code.push_back(compile_all(f, layout));
  ZeroTest z;
  for_samples(domain, opt.zero.seed, opt.zero.trials, opt.zero.failure_factor, [&](std::span<const double> slots) {
    Eigen::MatrixXd fm(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) fm.col(static_cast<Eigen::Index>(j)) = eval_all(code[j], slots);
    Eigen::VectorXd vv = eval_all(vc, slots);
    Eigen::VectorXd c = fm.colPivHouseholderQr().solve(vv);
    out.sampled_coefficients.push_back(c);
    Eigen::VectorXd r = vv - fm * c;
    Eigen::Index at = 0;
    double worst = r.cwiseAbs().maxCoeff(&at);
    ++z.samples;
    z.max_abs = std::max(z.max_abs, worst);
    if (worst > opt.zero.threshold) {
      z.verdict = ZeroVerdict::ProvablyNonzero;
      z.value = r(at);
      z.witness = layout.unpack(slots);
      return false;
    }
    return true;
  });
  out.residual_test = z;
  if (!out.sampled_coefficients.empty()) {
    bool constant = true;
    const Eigen::VectorXd& c0 = out.sampled_coefficients[0];
    for (const auto& c : out.sampled_coefficients)
      if ((c - c0).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, c0.cwiseAbs().maxCoeff())) constant = false;
    if (constant)
      for (Eigen::Index j = 0; j < c0.size(); ++j)
        out.coefficients.push_back(std::abs(c0(j)) <= opt.zero.threshold ? Expr::rational(0) : Expr::constant(c0(j)));
  }
  return out;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Holds:
      return "Holds";
    case Verdict::Fails:
      return "Fails";
    default:
      return "Inconclusive";
  }
}

bool ConditionReport::all_hold() const {
  return involutivity.verdict == Verdict::Holds && cross_coefficients.verdict == Verdict::Holds &&
         lambda_profile.verdict == Verdict::Holds && closedness.verdict == Verdict::Holds;
}

Json ConditionReport::to_json() const {
  auto one = [](const ConditionVerdict& v) {
    Json j = Json::object();
    j["verdict"] = to_string(v.verdict);
    j["defect"] = v.defect;
    j["checks"] = v.checks;
    if (!v.detail.empty()) j["detail"] = v.detail;
    if (!v.witness.empty()) j["witness"] = point_json(v.witness);
    return j;
  };
  Json j = Json::object();
  j["schema"] = "kwave-conditions/1";
  j["labels"] = labels;
  j["seed"] = seed;
  j["trials"] = trials;
  j["threshold"] = threshold;
  j["conditions"] = Json::object();
  j["conditions"]["involutivity"] = one(involutivity);
  j["conditions"]["cross_coefficients"] = one(cross_coefficients);
  j["conditions"]["lambda_profile"] = one(lambda_profile);
  j["conditions"]["closedness"] = one(closedness);
  j["all_hold"] = all_hold();
  return j;
}

ExprVec exterior_derivative(const ExprVec& lambda, const std::vector<std::string>& x) {
  ExprVec out;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) out.push_back(diff(lambda[j], x[i]) - diff(lambda[i], x[j]));
  return out;
}

ExprVec closedness_form(const ExprVec& lambda, const std::vector<std::string>& x) {
  const std::size_t p = x.size();
  if (lambda.size() != p) throw Error("covector has wrong length");
  auto d = [&](std::size_t i, std::size_t j) { return diff(lambda[j], x[i]) - diff(lambda[i], x[j]); };
  ExprVec out;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      for (std::size_t k = j + 1; k < p; ++k)
        out.push_back(add({d(i, j) * lambda[k], d(j, k) * lambda[i], d(k, i) * lambda[j]}));
  return out;
}

ConditionReport check_kwave_conditions(const QuasilinearSystem& sys, const std::vector<WaveElement>& elements,
                                       const Box& domain, const GeometryOptions& opt) {
  Box box = analysis_box(sys, domain);
  const auto& x = sys.space().independent();
  const auto& u = sys.space().dependent();
  const std::size_t k = elements.size();
  ConditionReport rep;
  rep.seed = opt.zero.seed;
  rep.trials = opt.zero.trials;
  rep.threshold = opt.zero.threshold;
  for (const auto& e : elements) {
    rep.labels.push_back(e.label);
    if (e.lambda.size() != sys.p() || e.gamma.size() != sys.q()) throw Error("element '" + e.label + "' has wrong shape");
  }

  std::vector<ExprVec> lambdas, gammas;
  for (const auto& e : elements) {
    lambdas.push_back(e.lambda);
    gammas.push_back(e.gamma);
  }
  std::string lw, gw;
  for (std::size_t s = 0; s < k; ++s) {
    lw += (s ? " ^ " : "") + std::string("lambda(") + elements[s].label + ")";
    gw += (s ? " ^ " : "") + std::string("gamma(") + elements[s].label + ")";
  }
  try {
    require_independent(lambdas, box, opt, lw);
  } catch (const DegenerateFrame& e) {
    throw DependentElements(lw, e.witness());
  }
  try {
    require_independent(gammas, box, opt, gw);
  } catch (const DegenerateFrame& e) {
    throw DependentElements(gw, e.witness());
  }

  // (a) and (b): brackets of the gamma frame.
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      std::string pair = "[gamma(" + elements[a].label + "), gamma(" + elements[b].label + ")]";
      ExprVec br = lie_bracket(gammas[a], gammas[b], u);
      BracketDecomposition dec = decompose_in_frame(br, gammas, box, opt);
      merge(rep.involutivity, verdict_from(dec.residual_test, pair + " leaves the frame"));
      for (std::size_t s = 0; s < k; ++s) {
        if (s == a || s == b) continue;
        std::string what = pair + " coefficient on gamma(" + elements[s].label + ")";
        if (!dec.in_span()) {
          ConditionVerdict v;
          v.verdict = Verdict::Inconclusive;
          v.checks = 1;
          v.detail = what + " undefined: bracket not in span";
          merge(rep.cross_coefficients, v);
          continue;
        }
        if (dec.symbolic || !dec.coefficients.empty()) {
          merge(rep.cross_coefficients, verdict_from(is_zero(dec.coefficients[s], box, opt.zero), what));
        } else {
          ZeroTest z;
          for (const auto& c : dec.sampled_coefficients) {
            ++z.samples;
            z.max_abs = std::max(z.max_abs, std::abs(c(static_cast<Eigen::Index>(s))));
            if (std::abs(c(static_cast<Eigen::Index>(s))) > opt.zero.threshold && z.zero()) {
              z.verdict = ZeroVerdict::ProvablyNonzero;
              z.value = c(static_cast<Eigen::Index>(s));
            }
          }
          merge(rep.cross_coefficients, verdict_from(z, what));
        }
      }
    }

  // (c): lambda(sigma) ^ lambda(s)_{,gamma(sigma)} ^ lambda(s) = 0.
  if (x.size() >= 3) {
    for (std::size_t sg = 0; sg < k; ++sg)
      for (std::size_t s = 0; s < k; ++s) {
        if (sg == s) continue;
        ExprVec dl = derivative_along(lambdas[s], gammas[sg], u);
        ExprVec minors;
        for (const auto& cols : combinations(x.size(), 3)) {
          ExprMat m(3, ExprVec(3));
          for (std::size_t c = 0; c < 3; ++c) {
            m[0][c] = lambdas[sg][cols[c]];
            m[1][c] = dl[cols[c]];
            m[2][c] = lambdas[s][cols[c]];
          }
          minors.push_back(determinant(m));
        }
        merge(rep.lambda_profile,
              verdict_from(all_zero(minors, box, opt.zero), "lambda(" + elements[sg].label + ") ^ d lambda(" +
                                                                 elements[s].label + ")/d gamma(" +
                                                                 elements[sg].label + ") ^ lambda(" +
                                                                 elements[s].label + ")"));
      }
  }

  // (d): d_x lambda ^ lambda = 0.
  for (std::size_t s = 0; s < k; ++s) {
    ExprVec form = closedness_form(lambdas[s], x);
    if (form.empty()) {
      rep.closedness.checks += 1;
      continue;
    }
    merge(rep.closedness, verdict_from(all_zero(form, box, opt.zero), "d lambda(" + elements[s].label +
                                                                        ") ^ lambda(" + elements[s].label + ")"));
  }
  return rep;
}

namespace {

std::vector<Expr> factor_candidates(const ExprVec& lambda, const std::vector<std::string>& vars) {
  std::vector<Expr> out;
  for (const auto& l : lambda)
    if (!l.is_zero_constant() && !l.is_constant()) out.push_back(Expr::rational(1) / l);
  for (const auto& v : vars) {
    Expr e = Expr::variable(v);
    for (int n : {-1, 1, -2, 2}) out.push_back(pow(e, Expr::rational(n)));
    out.push_back(exp(e));
    out.push_back(exp(-e));
  }
  for (std::size_t a = 0; a < vars.size(); ++a)
    for (std::size_t b = a + 1; b < vars.size(); ++b)
      for (int n : {-1, 1})
        for (int m : {-1, 1})
          out.push_back(pow(Expr::variable(vars[a]), Expr::rational(n)) * pow(Expr::variable(vars[b]), Expr::rational(m)));
  return out;
}

constexpr std::array<double, 8> kGaussNodes{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                            -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                            0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGaussWeights{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                              0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};

/// Integral of the covector along the segment a -> b with the remaining slots fixed.
double segment_integral(const std::vector<CompiledExpr>& lam, const std::vector<std::size_t>& xslots,
                        std::vector<double> slots, const std::vector<double>& a, const std::vector<double>& b) {
  constexpr int kPanels = 8;
  double total = 0.0;
  const std::size_t p = xslots.size();
  for (int panel = 0; panel < kPanels; ++panel) {
    double s0 = static_cast<double>(panel) / kPanels;
    double s1 = static_cast<double>(panel + 1) / kPanels;
    for (std::size_t g = 0; g < kGaussNodes.size(); ++g) {
      double s = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * kGaussNodes[g];
      for (std::size_t i = 0; i < p; ++i) slots[xslots[i]] = a[i] + s * (b[i] - a[i]);
      double dot = 0.0;
      for (std::size_t i = 0; i < p; ++i)
        if (b[i] != a[i]) dot += lam[i](slots) * (b[i] - a[i]);
      total += 0.5 * (s1 - s0) * kGaussWeights[g] * dot;
    }
  }
  return total;
}

}  // namespace

Potential find_potential(const QuasilinearSystem& sys, const WaveElement& element, const Point& basepoint,
                         const Box& domain, const GeometryOptions& opt) {
  Box box = analysis_box(sys, domain);
  const auto& x = sys.space().independent();
  ExprVec lambda = element.lambda;
  if (lambda.size() != x.size()) throw Error("covector has wrong length");
  check_variables(lambda, box);

  ExprVec form = closedness_form(lambda, x);
  if (!form.empty()) {
    auto z = all_zero(form, box, opt.zero);
    if (!z.zero()) throw NotClosed("d lambda ^ lambda = " + std::to_string(z.value), z.witness);
  }
  Potential pot;
  ExprVec dl = exterior_derivative(lambda, x);
  if (!dl.empty() && !all_zero(dl, box, opt.zero).zero()) {
    bool found = false;
    std::vector<std::string> vars = x;
    vars.insert(vars.end(), sys.space().dependent().begin(), sys.space().dependent().end());
    for (const auto& f : factor_candidates(lambda, vars)) {
      ExprVec scaled;
      for (const auto& l : lambda) scaled.push_back(f * l);
      try {
        if (all_zero(exterior_derivative(scaled, x), box, opt.zero).zero()) {
          pot.factor = f;
          pot.rescaled = true;
          lambda = std::move(scaled);
          found = true;
          break;
        }
      } catch (const DomainExhausted&) {
      }
    }
    if (!found) {
      auto z = all_zero(dl, box, opt.zero);
      throw NotClosed("no integrating factor found for d lambda = " + std::to_string(z.value), z.witness);
    }
  }

  // Symbolic staircase: integrate the remainder along one coordinate at a time.
  Expr phi = Expr::rational(0);
  bool symbolic = true;
  for (std::size_t i = 0; i < x.size() && symbolic; ++i) {
    Expr r = lambda[i] - diff(phi, x[i]);
    auto f = antiderivative(r, x[i]);
    if (!f) {
      symbolic = false;
      break;
    }
    phi = phi + *f;
  }
  if (symbolic) {
    ExprVec check;
    for (std::size_t i = 0; i < x.size(); ++i) check.push_back(diff(phi, x[i]) - lambda[i]);
    if (all_zero(check, box, opt.zero).zero()) {
      pot.symbolic = phi;
      Layout layout(sys.space().all());
      auto code = std::make_shared<CompiledExpr>(phi, layout);
      auto params = sys.parameter_values();
      pot.evaluate = [code, layout, params](const Point& p) {
        Point full = params;
        for (const auto& [k, v] : p) full[k] = v;
        return (*code)(layout.pack(full));
      };
      return pot;
    }
  }

  // Numeric line integral from the basepoint with dependent variables frozen.
  Layout layout = box.layout();
  auto lam = std::make_shared<std::vector<CompiledExpr>>(compile_all(lambda, layout));
  std::vector<std::size_t> xs;
  std::vector<double> x0;
  Point center = box.center();
  for (const auto& name : x) {
    xs.push_back(layout.index(name));
    auto it = basepoint.find(name);
    x0.push_back(it != basepoint.end() ? it->second : center.at(name));
  }
  auto straight = [lam, xs, x0, layout, center](const Point& p) {
    Point full = center;
    for (const auto& [k, v] : p) full[k] = v;
    auto slots = layout.pack(full);
    std::vector<double> target;
    for (std::size_t i : xs) target.push_back(slots[i]);
    return segment_integral(*lam, xs, slots, x0, target);
  };
  auto staircase = [lam, xs, x0, layout, center](const Point& p) {
    Point full = center;
    for (const auto& [k, v] : p) full[k] = v;
    auto slots = layout.pack(full);
    std::vector<double> cur = x0;
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::vector<double> next = cur;
      next[i] = slots[xs[i]];
      total += segment_integral(*lam, xs, slots, cur, next);
      cur = next;
    }
    return total;
  };
  std::mt19937_64 rng(opt.zero.seed);
  for (int k = 0; k < 4; ++k) {
    Point p = box.sample(rng);
    double a = straight(p), b = staircase(p);
    if (std::abs(a - b) > 1e-8 * std::max(1.0, std::abs(a)))
      throw PathDependent("line integrals differ by " + std::to_string(std::abs(a - b)), p);
  }
  pot.evaluate = straight;
  return pot;
}

std::vector<std::vector<ExprVec>> x_fields(const QuasilinearSystem& sys, const std::vector<ExprVec>& gammas) {
  std::vector<std::vector<ExprVec>> out;
  for (const auto& g : gammas) {
    if (g.size() != sys.q()) throw Error("characteristic vector has wrong length");
    std::vector<ExprVec> per_eq;
    for (std::size_t alpha = 0; alpha < sys.m(); ++alpha) {
      ExprVec comps;
      for (std::size_t i = 0; i < sys.p(); ++i) {
        ExprVec terms;
        for (std::size_t beta = 0; beta < sys.q(); ++beta) terms.push_back(sys.A(i)[alpha][beta] * g[beta]);
        comps.push_back(add(std::move(terms)));
      }
      per_eq.push_back(std::move(comps));
    }
    out.push_back(std::move(per_eq));
  }
  return out;
}

}  // namespace kwave
