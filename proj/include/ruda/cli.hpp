#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ruda::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kCheckFailed = 2 };

/// Entry point of the `ruda` tool; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ruda::cli
