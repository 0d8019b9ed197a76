#include "kwave/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "kwave/fixtures.hpp"
#include "kwave/frobenius.hpp"
#include "kwave/verifier.hpp"
#include "kwave/wave_geometry.hpp"
#include "kwave/wave_solver.hpp"

namespace kwave {

namespace {

/// Missing or inconsistent request data (exit 2).
class InputError : public Error {
public:
  using Error::Error;
};

/// A mathematical check that did not hold (exit 3).
class ConditionFailure : public Error {
public:
  using Error::Error;
};

/// The solver or the verification of its output failed (exit 4).
class SolverFailure : public Error {
public:
  using Error::Error;
};

constexpr std::uint64_t kDefaultSeed = 20240601;

const Json& section(const Json& analysis, const char* key) {
  static const Json empty = Json::object();
  if (analysis.is_object() && analysis.contains(key)) return analysis.at(key);
  return empty;
}

template <class T>
T value_or(const Json& j, const char* key, T fallback) {
  return j.is_object() && j.contains(key) ? j.at(key).get<T>() : fallback;
}

ExprVec parse_list(const Json& j, const std::vector<std::string>& names) {
  ExprVec out;
  for (const auto& s : j) out.push_back(parse(s.is_string() ? s.get<std::string>() : s.dump(), names));
  return out;
}

Eigen::VectorXd numbers(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

Json expr_list(const ExprVec& v) {
  Json j = Json::array();
  for (const auto& e : v) j.push_back(e.str());
  return j;
}

class Outputs {
public:
  Outputs(std::filesystem::path dir, RunResult& result) : dir_(std::move(dir)), result_(result) {}

  void write(const std::string& name, const std::string& text) {
    std::filesystem::create_directories(dir_);
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw InputError("cannot write '" + (dir_ / name).string() + "'");
    out << text;
    if (std::find(result_.written.begin(), result_.written.end(), name) == result_.written.end())
      result_.written.push_back(name);
  }
  void write(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

private:
  std::filesystem::path dir_;
  RunResult& result_;
};

struct Context {
  SystemFile file;
  QuasilinearSystem sys;
  Box domain;
  std::uint64_t seed = kDefaultSeed;
  ZeroTestOptions zero;
  double tol_newton = 1e-12;
  FdOptions fd;
  std::optional<Grid> grid;
  std::vector<WaveElement> elements;
  std::vector<std::optional<Expr>> gauges;
  std::optional<FrameRescaling> rescaling;
  std::optional<SolutionField> field;
};

GeometryOptions geometry(const Context& c) {
  GeometryOptions g;
  g.zero = c.zero;
  return g;
}

void stage_homogenize(Context& c, Outputs& out, std::ostream& log) {
  HomogenizeOptions opt;
  const Json& h = section(c.file.analysis, "homogenize");
  if (h.contains("new_variable")) opt.new_variable = h.at("new_variable").get<std::string>();
  auto res = homogenize(c.sys, c.domain, opt);
  Json meta = c.file.analysis.is_object() ? c.file.analysis : Json::object();
  Json hj = Json::object();
  Json m = Json::array();
  for (const auto& row : res.M) m.push_back(expr_list(row));
  hj["M"] = m;
  hj["all_sources_zero"] = res.all_sources_zero;
  if (!res.all_sources_zero) {
    hj["new_variable"] = res.new_variable;
    hj["shifted_variable"] = res.shifted_variable;
    auto check = check_normalization(c.sys, res, c.domain.merged(Box().set(res.new_variable, -0.5, 0.5)), c.zero);
    hj["normalization"] = check.zero() ? "holds" : "fails";
    if (!check.zero()) throw ConditionFailure("M b is not e_1 at " + format_point(check.witness));
  }
  meta["homogenization"] = hj;
  out.write("homogenized.system.json", dump_system(res.system, meta));
  log << "homogenize: " << (res.all_sources_zero ? "already homogeneous" : "new variable " + res.new_variable)
      << "\n";
  c.sys = res.system;
}

void stage_elements(Context& c, Outputs& out, std::ostream& log) {
  const Json& waves = section(c.file.analysis, "waves");
  if (!waves.is_array() || waves.empty()) throw InputError("analysis section lists no wave covectors");
  const auto names = c.sys.space().all();
  Box box = analysis_box(c.sys, c.domain);
  Json report = Json::object();
  report["schema"] = "kwave-elements/1";
  Json list = Json::array();
  for (std::size_t n = 0; n < waves.size(); ++n) {
    const Json& w = waves.at(n);
    WaveElement e;
    e.label = value_or<std::string>(w, "label", "wave" + std::to_string(n + 1));
    e.lambda = parse_list(w.at("lambda"), names);
    if (e.lambda.size() != c.sys.p())
      throw InputError("covector '" + e.label + "' needs " + std::to_string(c.sys.p()) + " components");
    Json item = {{"label", e.label}, {"lambda", expr_list(e.lambda)}};
    if (w.contains("gamma")) {
      e.gamma = parse_list(w.at("gamma"), names);
      if (e.gamma.size() != c.sys.q()) throw InputError("vector '" + e.label + "' has the wrong length");
      item["gamma_source"] = "given";
    } else {
      auto kernel = kernel_elements(c.sys, e.lambda, box, geometry(c));
      if (!kernel.front().symbolic) throw ConditionFailure("no closed-form kernel vector for '" + e.label + "'");
      e.gamma = *kernel.front().symbolic;
      item["gamma_source"] = "kernel";
      item["kernel_dimension"] = kernel.size();
    }
    auto rel = wave_relation(c.sys, e.lambda, e.gamma, box, c.zero);
    item["gamma"] = expr_list(e.gamma);
    item["wave_relation"] = {{"verdict", rel.zero() ? "Holds" : "Fails"}, {"max_abs", rel.zero() ? rel.max_abs : std::abs(rel.value)}};
    list.push_back(item);
    c.gauges.push_back(w.contains("potential_gauge")
                           ? std::optional<Expr>(parse(w.at("potential_gauge").get<std::string>(), names))
                           : std::nullopt);
    c.elements.push_back(std::move(e));
    if (!rel.zero()) {
      report["elements"] = list;
      out.write("elements.json", report);
      throw ConditionFailure("wave relation fails for '" + c.elements.back().label + "' at " +
                             format_point(rel.witness));
    }
  }
  report["elements"] = list;
  out.write("elements.json", report);
  log << "elements: " << c.elements.size() << " wave element(s)\n";
}

void stage_conditions(Context& c, Outputs& out, std::ostream& log) {
  auto report = check_kwave_conditions(c.sys, c.elements, c.domain, geometry(c));
  out.write("conditions.json", report.to_json());
  log << "conditions: " << (report.all_hold() ? "all hold" : "not all hold") << "\n";
  if (!report.all_hold()) {
    std::string which;
    for (auto [name, v] : {std::pair{"involutivity", &report.involutivity},
                           std::pair{"cross_coefficients", &report.cross_coefficients},
                           std::pair{"lambda_profile", &report.lambda_profile},
                           std::pair{"closedness", &report.closedness}})
      if (v->verdict != Verdict::Holds)
        which += std::string(which.empty() ? "" : ", ") + name + " " + to_string(v->verdict);
    throw ConditionFailure(which);
  }
}

void stage_rescale(Context& c, Outputs& out, std::ostream& log) {
  std::vector<ExprVec> gammas;
  for (const auto& e : c.elements) gammas.push_back(e.gamma);
  RescaleOptions opt;
  opt.geometry = geometry(c);
  Box box = analysis_box(c.sys, c.domain);
  auto r = rescale_frame(gammas, c.sys.space().dependent(), box, opt);
  out.write("rescaling.json", r.to_json(box));
  log << "rescale: " << r.method << "\n";
  if (!r.commuting()) throw ConditionFailure("rescaled fields do not commute");
  c.rescaling = std::move(r);
}

ExprMat hodograph_mu(const Context& c, const Json& hod, const std::vector<std::string>& names) {
  const std::size_t k = c.elements.size();
  ExprMat mu(k, ExprVec(k, Expr::rational(0)));
  if (hod.contains("mu")) {
    const Json& m = hod.at("mu");
    if (m.size() != k) throw InputError("mu must be " + std::to_string(k) + " x " + std::to_string(k));
    for (std::size_t a = 0; a < k; ++a) {
      mu[a] = parse_list(m.at(a), names);
      if (mu[a].size() != k) throw InputError("mu must be square");
    }
    return mu;
  }
  for (std::size_t a = 0; a < k; ++a) {
    if (!c.rescaling || c.rescaling->method == "identity") {
      mu[a][a] = Expr::rational(1);
    } else if (c.rescaling->factors[a].symbolic) {
      mu[a][a] = *c.rescaling->factors[a].symbolic;
    } else {
      throw InputError("grid rescaling has no closed form; supply hodograph.mu");
    }
  }
  return mu;
}

void stage_solve(Context& c, Outputs& out, std::ostream& log) {
  const Json& hod = section(c.file.analysis, "hodograph");
  const std::size_t k = c.elements.size();
  std::vector<std::string> params;
  if (hod.contains("parameters"))
    params = hod.at("parameters").get<std::vector<std::string>>();
  else
    for (std::size_t a = 0; a < k; ++a) params.push_back("tau" + std::to_string(a + 1));
  if (params.size() != k) throw InputError("hodograph needs one parameter per wave element");
  if (!hod.contains("box")) throw InputError("hodograph section needs a parameter box");
  Box tau_box = Box::parse(hod.at("box").get<std::string>());
  std::vector<std::string> names = c.sys.space().all();
  names.insert(names.end(), params.begin(), params.end());
  Eigen::VectorXd base = hod.contains("base") ? numbers(hod.at("base")) : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  std::optional<ExprVec> ansatz;
  if (hod.contains("ansatz")) ansatz = parse_list(hod.at("ansatz"), names);
  Eigen::VectorXd u0;
  if (hod.contains("u0")) {
    u0 = numbers(hod.at("u0"));
  } else if (ansatz) {
    Point at = c.sys.parameter_values();
    for (std::size_t a = 0; a < k; ++a) at[params[a]] = base(static_cast<Eigen::Index>(a));
    u0.resize(static_cast<Eigen::Index>(ansatz->size()));
    for (std::size_t i = 0; i < ansatz->size(); ++i) u0(static_cast<Eigen::Index>(i)) = evaluate((*ansatz)[i], at);
  } else {
    throw InputError("hodograph section needs u0 or an ansatz");
  }
  if (static_cast<std::size_t>(base.size()) != k || static_cast<std::size_t>(u0.size()) != c.sys.q())
    throw InputError("hodograph base or u0 has the wrong length");

  HodographOptions hopt;
  hopt.step = value_or<double>(hod, "step", 1e-2);
  hopt.seed = c.seed;
  std::vector<ExprVec> gammas;
  for (const auto& e : c.elements) gammas.push_back(e.gamma);
  auto surface = build_hodograph(c.sys, gammas, hodograph_mu(c, hod, names), params, base, u0, tau_box, ansatz, hopt);

  Box box = analysis_box(c.sys, c.domain);
  std::vector<ImplicitPotential> potentials;
  Json pots = Json::array();
  for (std::size_t a = 0; a < k; ++a) {
    auto pot = find_potential(c.sys, c.elements[a], {}, c.domain, geometry(c));
    if (pot.symbolic) {
      Expr phi = c.gauges[a] ? *pot.symbolic + *c.gauges[a] : *pot.symbolic;
      potentials.push_back(make_potential(c.sys, phi));
      pots.push_back(phi.str());
    } else {
      if (c.gauges[a]) {
        auto base_eval = pot.evaluate;
        CompiledExpr g(*c.gauges[a], box.layout());
        Layout layout = box.layout();
        pot.evaluate = [base_eval, g, layout](const Point& p) { return base_eval(p) + g(layout.pack(p)); };
      }
      potentials.push_back(make_potential(c.sys, pot));
      pots.push_back(nullptr);
    }
  }

  const Json& sj = section(c.file.analysis, "solver");
  ImplicitSolveConfig cfg;
  cfg.tolerance = c.tol_newton;
  std::string guess = value_or<std::string>(sj, "guess", "base");
  if (guess == "explicit") {
    cfg.guess = GuessPolicy::Explicit;
    if (!sj.contains("initial")) throw InputError("explicit guess needs solver.initial");
    cfg.initial = numbers(sj.at("initial"));
  } else if (guess != "base") {
    throw InputError("solver.guess must be 'base' or 'explicit'");
  }
  cfg.warm_first = value_or<bool>(sj, "warm_first", false);
  cfg.warm_start = value_or<bool>(sj, "warm_start", true);
  cfg.max_iterations = value_or<int>(sj, "max_iterations", 100);

  c.field = solve_implicit(c.sys, surface, potentials, *c.grid, cfg);
  std::ostringstream tsv;
  c.field->write_tsv(tsv);
  out.write("solution.tsv", tsv.str());

  std::size_t converged = 0, catastrophe = 0, diverged = 0;
  double newton_max = 0.0;
  for (const auto& p : c.field->points) {
    if (p.status == PointStatus::Converged) ++converged;
    if (p.status == PointStatus::Catastrophe) ++catastrophe;
    if (p.status == PointStatus::Diverged) ++diverged;
    if (p.status != PointStatus::Diverged) newton_max = std::max(newton_max, p.newton_residual);
  }
  Json summary = Json::object();
  summary["schema"] = "kwave-solution/1";
  summary["grid"] = c.grid->str();
  summary["points"] = c.field->points.size();
  summary["converged"] = converged;
  summary["catastrophe"] = catastrophe;
  summary["diverged"] = diverged;
  summary["newton_residual_max"] = newton_max;
  summary["potentials"] = pots;
  summary["hodograph"] = {{"parameters", params},
                          {"provenance", surface.provenance},
                          {"swap_mismatch", surface.swap_mismatch},
                          {"tangency_defect", surface.tangency_defect}};
  Json brackets = Json::array();
  for (const auto& axis : c.grid->names)
    if (c.grid->axes[static_cast<std::size_t>(&axis - c.grid->names.data())].size() > 1)
      for (const auto& b : locate_catastrophe(*c.field, axis)) {
        Json line = Json::object();
        for (const auto& [n, v] : b.line) line[n] = v;
        brackets.push_back({{"axis", axis}, {"line", line}, {"lo", b.lo}, {"hi", b.hi}, {"kind", b.kind}});
      }
  summary["catastrophe_brackets"] = brackets;
  out.write("solution.json", summary);
  log << "solve: " << converged << "/" << c.field->points.size() << " converged\n";
  if (converged != c.field->points.size())
    throw SolverFailure(std::to_string(catastrophe) + " catastrophe and " + std::to_string(diverged) +
                        " diverged point(s)");
}

void stage_verify(Context& c, Outputs& out, std::ostream& log) {
  const Json& vj = section(c.file.analysis, "verify");
  VerifyOptions opt;
  opt.fd = c.fd;
  opt.constancy.seed = c.seed;
  opt.constancy.h = c.fd.h;
  if (vj.contains("expected_xi")) opt.expected_xi = numbers(vj.at("expected_xi"));
  const double tol = value_or<double>(vj, "residual_tolerance", 1e-6);
  auto v = verify_field(c.sys, *c.field, c.elements, opt);
  Json j = v.to_json(*c.field);
  j["residual_tolerance"] = tol;
  out.write("residuals.json", j);
  std::ostringstream tsv;
  c.field->write_tsv(tsv);
  out.write("solution.tsv", tsv.str());
  log << "verify: residual max " << v.residuals.max << ", rank " << v.min_rank << ".." << v.max_rank << "\n";
  std::vector<std::string> problems;
  if (v.residuals.max > tol) problems.push_back("residual above tolerance");
  if (!v.residuals.failures.empty()) problems.push_back(std::to_string(v.residuals.failures.size()) + " failed point(s)");
  if (v.rejected) problems.push_back(std::to_string(v.rejected) + " decomposition(s) rejected");
  if (opt.expected_xi && !(v.xi_deviation <= opt.recovery.tolerance)) problems.push_back("xi differs from expected");
  if (v.constancy.verdict != Verdict::Holds) problems.push_back("u varies along the kernel");
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw SolverFailure(msg);
  }
}

std::string iso_time() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> s{"homogenize", "elements", "conditions", "rescale", "solve", "verify"};
  return s;
}

SystemFile load_system(const std::string& spec) {
  if (!spec.empty() && spec.front() == '@') {
    auto names = fixture_names();
    if (std::find(names.begin(), names.end(), spec.substr(1)) == names.end())
      throw InputError("unknown fixture '" + spec.substr(1) + "'");
    return load_fixture(spec.substr(1));
  }
  if (!std::filesystem::is_regular_file(spec)) throw InputError("cannot open '" + spec + "'");
  return load_system_file(spec);
}

std::string describe(const QuasilinearSystem& sys) {
  std::ostringstream out;
  const auto& x = sys.space().independent();
  out << "p=" << sys.p() << " (";
  for (std::size_t i = 0; i < x.size(); ++i) out << (i ? "," : "") << x[i];
  out << "), q=" << sys.q() << ", " << (sys.source_is_zero() ? "homogeneous" : "inhomogeneous");
  if (auto e = sys.evolutionary_index()) out << ", evolutionary in " << x[*e];
  out << "\n";
  out << "m=" << sys.m() << " equation(s)" << (sys.properly_determined() ? "" : ", not properly determined") << "\n";
  out << "dependent:";
  for (const auto& u : sys.space().dependent()) out << " " << u;
  out << "\n";
  if (!sys.space().parameters().empty()) {
    out << "parameters:";
    for (const auto& p : sys.space().parameters()) {
      out << " " << p;
      auto it = sys.parameter_values().find(p);
      if (it != sys.parameter_values().end()) out << "=" << it->second;
    }
    out << "\n";
  }
  return out.str();
}

RunResult run(const AnalysisRequest& request, std::ostream& log) {
  RunResult result;
  Outputs out(request.out, result);
  std::string stage = "input";
  Json meta = Json::object();
  meta["schema"] = "kwave-metadata/1";
  meta["started"] = iso_time();
  meta["system"] = request.system;
  auto t0 = std::chrono::steady_clock::now();
  Json timings = Json::object();

  auto fail = [&](int code, const std::string& msg) {
    result.exit_code = code;
    result.diagnostics.push_back("[" + stage + "] " + msg);
  };

  try {
    Context c;
    c.file = load_system(request.system);
    c.sys = c.file.system;
    const Json& a = c.file.analysis;

    std::vector<std::string> stages;
    if (request.stages)
      stages = *request.stages;
    else if (a.is_object() && a.contains("stages"))
      stages = a.at("stages").get<std::vector<std::string>>();
    else
      stages = pipeline_stages();
    if (stages.empty() || stages.size() > pipeline_stages().size() ||
        !std::equal(stages.begin(), stages.end(), pipeline_stages().begin()))
      throw InputError("stages must be a prefix of homogenize,elements,conditions,rescale,solve,verify");

    std::string domain = request.domain ? *request.domain : value_or<std::string>(a, "domain", "");
    if (domain.empty()) throw InputError("no domain given");
    c.domain = Box::parse(domain);
    if (c.domain.empty()) throw InputError("empty domain");
    c.seed = request.seed ? *request.seed : value_or<std::uint64_t>(a, "seed", kDefaultSeed);
    c.zero.seed = c.seed;
    if (request.tol_zero) c.zero.threshold = *request.tol_zero;
    if (request.tol_newton) c.tol_newton = *request.tol_newton;
    const Json& vj = section(a, "verify");
    c.fd.h = request.fd_step ? *request.fd_step : value_or<double>(vj, "fd_step", 1e-5);
    c.fd.richardson = request.richardson ? *request.richardson : value_or<bool>(vj, "richardson", false);
    if (std::find(stages.begin(), stages.end(), "solve") != stages.end()) {
      std::string g = request.grid ? *request.grid : value_or<std::string>(a, "grid", "");
      c.grid = Grid::parse(g);
      if (c.grid->empty()) throw InputError("empty grid");
    }
    meta["stages"] = stages;
    meta["seed"] = c.seed;
    meta["domain"] = c.domain.str();
    if (c.grid) meta["grid"] = c.grid->str();
    meta["tolerances"] = {{"newton", c.tol_newton}, {"zero", c.zero.threshold}, {"fd_step", c.fd.h},
                          {"richardson", c.fd.richardson}};

    for (const auto& s : stages) {
      stage = s;
      auto start = std::chrono::steady_clock::now();
      if (s == "homogenize") stage_homogenize(c, out, log);
      if (s == "elements") stage_elements(c, out, log);
      if (s == "conditions") stage_conditions(c, out, log);
      if (s == "rescale") stage_rescale(c, out, log);
      if (s == "solve") stage_solve(c, out, log);
      if (s == "verify") stage_verify(c, out, log);
      timings[s] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.completed.push_back(s);
    }
  } catch (const InputError& e) {
    fail(kExitInput, e.what());
  } catch (const SyntaxError& e) {
    fail(kExitInput, e.what());
  } catch (const UnknownIdentifier& e) {
    fail(kExitInput, e.what());
  } catch (const DomainError& e) {
    fail(kExitInput, e.what());
  } catch (const Json::exception& e) {
    fail(kExitInput, std::string("malformed analysis section: ") + e.what());
  } catch (const ConditionFailure& e) {
    fail(kExitCondition, e.what());
  } catch (const SolverFailure& e) {
    fail(kExitSolver, e.what());
  } catch (const BlowUp& e) {
    fail(kExitSolver, e.what());
  } catch (const StiffnessAbort& e) {
    fail(kExitSolver, e.what());
  } catch (const SolveFailed& e) {
    fail(kExitSolver, e.what());
  } catch (const NeighborDiverged& e) {
    fail(kExitSolver, e.what());
  } catch (const Error& e) {
    // Remaining library errors are failed mathematical preconditions (kernels, spans, closedness).
    fail(stage == "input" ? kExitInput : kExitCondition, e.what());
  }

  meta["completed"] = result.completed;
  meta["exit_code"] = result.exit_code;
  meta["diagnostics"] = result.diagnostics;
  meta["timings_seconds"] = timings;
  meta["total_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    out.write("metadata.json", meta);
  } catch (const Error& e) {
    if (result.exit_code == kExitOk) fail(kExitInput, e.what());
  }
  return result;
}

}  // namespace kwave
