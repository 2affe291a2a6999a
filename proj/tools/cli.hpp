#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uace::cli {

enum ExitCode : int { ok = 0, validation_error = 1, numerical_error = 2, usage_error = 3 };

// Runs one invocation. `args` excludes the program name. Machine-readable
// output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uace::cli
