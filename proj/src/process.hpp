#pragma once

// Thin POSIX process helpers shared by the scp copier and the launcher.

#include <sys/types.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fcomm::detail {

struct CommandResult {
  int exit_code = -1;  // -1 when killed by a signal
  std::string diagnostics;  // captured stderr
};

/// Runs argv[0] (PATH lookup applies) to completion, capturing stderr.
/// Throws std::system_error if the process cannot be started.
CommandResult run_command(const std::vector<std::string>& argv);

/// Resolves `program` the way execvp would. Empty when not found or not executable.
std::optional<std::filesystem::path> find_executable(const std::string& program);

struct SpawnOptions {
  std::vector<std::string> env;  // full environment, KEY=VALUE
  bool new_process_group = true;
  std::optional<std::filesystem::path> output;  // stdout and stderr go here when set
};

/// Starts argv without waiting. Throws std::system_error on failure.
pid_t spawn(const std::vector<std::string>& argv, const SpawnOptions& options);

std::vector<std::string> current_environment();

}  // namespace fcomm::detail
