#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace effope {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternalError = 2;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "EFFOPE_OUT_DIR";

/**
 * Runs the `effope` command line. `args[0]` is the program name.
 *
 * Output files are written once, atomically, after the computation finished;
 * a failing run leaves no output behind. Returns 0 on success, 1 on a user
 * error (bad flags, config, model or data) and 2 on an internal error.
 */
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace effope
