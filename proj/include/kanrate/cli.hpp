// Command-line front end: gen, fit, eval and experiment subcommands.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kanrate {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitTraining = 3,
    kExitPartial = 4,
};

/// Runs one invocation; `args` excludes the program name. Results go to
/// `out` as key=value lines, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kanrate
