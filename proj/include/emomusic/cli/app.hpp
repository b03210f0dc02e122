#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace emomusic::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the process
/// exit code: 0 success, 1 validation error (including bad flags), 2 runtime
/// failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emomusic::cli
