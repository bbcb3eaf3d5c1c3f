#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace moodgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (without the program name). Subcommands: synth,
/// train, annotate, analyze, eval.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace moodgan::cli
