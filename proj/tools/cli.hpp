#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bastext::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the
/// process exit status: 0 on success, 1 on a runtime error, 2 on a usage
/// error. Errors are reported on `err` as a single `error: ...` line.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

} // namespace bastext::cli
