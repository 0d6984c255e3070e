#pragma once

// Command-line front end. `run_cli` takes the arguments after the program name
// and returns the process exit code; errors print as `error[<category>]: ...`.

#include <iosfwd>
#include <string>
#include <vector>

namespace watch {

inline constexpr const char* kVersion = "0.1.0";

// Environment variable naming the default output root for commands run without --out.
inline constexpr const char* kOutRootEnv = "WATCH_OUT_ROOT";

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace watch
