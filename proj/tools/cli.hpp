#pragma once

#include <ostream>

namespace cbandit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;    // unreadable input, bad schema or config
inline constexpr int kExitRuntime = 3;  // model fitting or other runtime failure

/// Entry point shared by the executable and the tests. argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cbandit::cli
