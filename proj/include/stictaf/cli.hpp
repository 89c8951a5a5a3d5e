#pragma once

#include <filesystem>
#include <iosfwd>

namespace stictaf {

// Exit codes of the command-line driver.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;   // bad arguments, config or input; nothing written
inline constexpr int kExitNumeric = 2;   // numerical abort; a checkpoint is written

// Default output root: $STICTAF_RUNS_ROOT, else "runs".
std::filesystem::path runs_root();

// Entry point for `stictaf <subcommand> ...`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stictaf
