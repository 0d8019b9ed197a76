#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kwave/system.hpp"

namespace kwave {

/// Stage names in pipeline order; a request runs a prefix of this list.
const std::vector<std::string>& pipeline_stages();

struct AnalysisRequest {
  /// Path of a system file, or "@name" for a bundled fixture.
  std::string system;
  /// Overrides of the analysis section of the system file.
  std::optional<std::string> domain;
  std::optional<std::vector<std::string>> stages;
  std::optional<std::string> grid;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "kwave-out";
  std::optional<double> tol_newton;
  std::optional<double> tol_zero;
  std::optional<double> fd_step;
  std::optional<bool> richardson;
};

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitCondition = 3, kExitSolver = 4 };

struct RunResult {
  int exit_code = kExitOk;
  /// Stages that completed.
  std::vector<std::string> completed;
  /// "[stage] message" lines.
  std::vector<std::string> diagnostics;
  /// Files written, relative to the output directory.
  std::vector<std::string> written;
};

/// Runs the requested stages and writes their reports into request.out.
RunResult run(const AnalysisRequest& request, std::ostream& log);

/// One-line summary followed by detail lines.
std::string describe(const QuasilinearSystem& sys);

/// Loads a path or "@fixture".
SystemFile load_system(const std::string& spec);

}  // namespace kwave
