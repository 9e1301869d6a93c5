#pragma once

#include <iosfwd>
#include <string>

namespace gec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitSolver = 2;

/// Runs `gec estimate|simulate|diagnose ...`. Results go to the files named
/// by --out or to `out`; messages go to `err`.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Top-level help including the flags of every subcommand.
std::string help_text();

}  // namespace gec::cli
