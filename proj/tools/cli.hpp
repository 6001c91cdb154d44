#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace memlab::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNumeric = 3 };

/// Runs the command line `args` (without the program name). Normal output
/// goes to `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memlab::cli
