#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deixis {

// Entry point shared by the binary and the tests. `args` excludes the
// program name. Returns the process exit code; diagnostics go to `err`,
// machine-readable results to files, and `out` is reserved for the few
// commands that print for a human (predict).
int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err);

}  // namespace deixis
