#pragma once

#include <iostream>

namespace lorid::cli {

inline constexpr int kPass = 0;
inline constexpr int kCheckFailure = 1;
inline constexpr int kUsageError = 2;

/// Runs one subcommand. Returns kPass, kCheckFailure (a verify check failed)
/// or kUsageError (bad flags, bad config, unreadable inputs).
int run(int argc, const char* const* argv, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace lorid::cli
