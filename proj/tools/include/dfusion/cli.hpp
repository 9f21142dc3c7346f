#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace dfusion {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `dfusion` subcommand. `args` excludes the program name. Diagnostics
/// go to `err`, progress and reports to `out`.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace dfusion
