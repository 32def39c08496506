#pragma once

#include <iosfwd>
#include <string>

#include "atnet/config.hpp"

namespace atnet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Subcommands: synth, train-prior, train-restore, estimate, restore, eval.
bool is_command(const std::string& name);

/// Runs one subcommand. Progress goes to out, errors to err. Returns an exit code.
/// Each command writes resolved_config.txt into its output directory.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace atnet
