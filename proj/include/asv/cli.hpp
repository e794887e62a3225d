#pragma once

#include <iosfwd>

namespace asv {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // simulate: some layer outside the threshold
inline constexpr int kExitBadInput = 2;     // usage, missing file, parse or validation error
inline constexpr int kExitBudget = 3;       // trial budget exceeded
inline constexpr int kExitInternal = 4;     // numerical failure

/// Runs one asvinit invocation. Reports go to `out` unless --out is given.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace asv
