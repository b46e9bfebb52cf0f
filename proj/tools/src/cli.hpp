#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pmuidx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs one command line. `args` excludes the program name. Regular output
// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pmuidx::cli
