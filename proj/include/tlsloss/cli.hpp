#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tlsloss::cli {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kInputError = 2,
  kFitFailure = 3,
  kSolverNonConvergence = 4,
};

/// Runs one command line (without the program name). Reports go to `out` unless `--out`
/// redirects them to a file; diagnostics and warnings go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tlsloss::cli
