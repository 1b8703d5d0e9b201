#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace frl::cli {

/// Runs one `frl` subcommand. Returns 0 on success, 2 on configuration
/// errors and 1 on runtime failures; messages go to `out` and `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace frl::cli
