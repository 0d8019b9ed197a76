#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kwave/fixtures.hpp"
#include "kwave/pipeline.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riemann k-wave analysis of quasilinear first-order systems"};
  app.require_subcommand(0, 1);

  kwave::AnalysisRequest req;
  std::string stages, out = "kwave-out";
  std::optional<std::string> domain, grid;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_newton, tol_zero, fd_step;
  bool richardson = false, quiet = false;
  app.add_option("--system", req.system, "system file, or @name for a bundled fixture");
  app.add_option("--domain", domain, "box such as t=1:3,x=1:3,u1=0.1:1.7 (default: analysis.domain)");
  app.add_option("--stages", stages, "comma-separated prefix of homogenize,elements,conditions,rescale,solve,verify");
  app.add_option("--grid", grid, "solution grid such as t=1:3:20,x=1:3:20 (default: analysis.grid)");
  app.add_option("--seed", seed, "seed of every randomized test (default: analysis.seed or 20240601)");
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--tol-newton", tol_newton, "Newton residual tolerance (default 1e-12)");
  app.add_option("--tol-zero", tol_zero, "zero-test threshold (default 1e-9)");
  app.add_option("--fd-step", fd_step, "finite-difference step of the verifier (default 1e-5)");
  app.add_flag("--richardson", richardson, "Richardson-extrapolate finite differences");
  app.add_flag("-q,--quiet", quiet, "only print diagnostics");

  auto* describe = app.add_subcommand("describe", "summarize a system file");
  std::string describe_path;
  describe->add_option("system", describe_path, "system file or @name")->required();

  auto* fixture = app.add_subcommand("fixture", "print a bundled fixture, or list them");
  std::string fixture_name;
  fixture->add_option("name", fixture_name, "fixture name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kwave::kExitInput;
  }

  if (*describe) {
    try {
      std::cout << kwave::describe(kwave::load_system(describe_path).system);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kwave::kExitInput;
    }
  }
  if (*fixture) {
    if (fixture_name.empty()) {
      for (const auto& n : kwave::fixture_names()) std::cout << n << "\n";
      return 0;
    }
    try {
      std::cout << kwave::fixture_text(fixture_name);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kwave::kExitInput;
    }
  }
  if (req.system.empty()) {
    std::cerr << "--system is required\n" << app.help();
    return kwave::kExitInput;
  }
  req.out = out;
  req.domain = domain;
  req.grid = grid;
  req.seed = seed;
  req.tol_newton = tol_newton;
  req.tol_zero = tol_zero;
  req.fd_step = fd_step;
  if (richardson) req.richardson = true;
  if (!stages.empty()) req.stages = split_list(stages);

  std::ostringstream sink;
  auto result = kwave::run(req, quiet ? sink : std::cout);
  for (const auto& d : result.diagnostics) std::cerr << d << "\n";
  return result.exit_code;
}
