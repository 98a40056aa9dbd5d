#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace gestimate::cli {

struct CommandOptions {
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
};

// runs one command end to end; returns the process exit code (0 ok, 1 numerical, 2 config/data)
int run_command(const std::string& command, const std::string& config_path, const CommandOptions& options);

}  // namespace gestimate::cli
