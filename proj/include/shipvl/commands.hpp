#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace shipvl {

// Process exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitFatal = 1, kExitWarnings = 2 };

inline constexpr const char* kSeedEnvVar = "POPEYE_SEED";

// Flag beats environment beats config file; returns nullopt when none is set.
// Throws InvalidArgument when the environment value is not an unsigned integer.
std::optional<std::uint64_t> resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config);

// Full command-line entry point: args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shipvl
