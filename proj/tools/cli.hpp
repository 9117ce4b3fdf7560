// cli.hpp - the `acdc` command-line tool as a callable function.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace acdc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

// args excludes the program name.  Diagnostics go to err as one line.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace acdc::cli
