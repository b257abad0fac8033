#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tcu {

/// Runs the `tcu` command line. Returns the process exit code: 0 success,
/// 1 domain error, 2 usage or io error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tcu
