#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace debias::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. argv excludes the program name. Diagnostics go to
/// `err`, progress to `out`.
int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

} // namespace debias::cli
