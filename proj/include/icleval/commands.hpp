#pragma once

#include "icleval/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace icleval {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;  // verify mismatch or unexpected error
inline constexpr int kConfig = 2;
inline constexpr int kBackend = 3;
inline constexpr int kSelection = 4;
}  // namespace exit_code

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> records;
  ConfigOverrides overrides;
  bool resume = false;
};

// Each command returns a process exit code and reports progress/errors on `log`.
int cmd_run(const CommandOptions& options, std::ostream& log);
int cmd_select(const CommandOptions& options, std::ostream& log);
int cmd_verify(const CommandOptions& options, std::ostream& log);
int cmd_report(const CommandOptions& options, std::ostream& log);

// Full command line: icleval <run|select|verify|report> [flags].
int run_cli(int argc, char** argv, std::ostream& log);

}  // namespace icleval
