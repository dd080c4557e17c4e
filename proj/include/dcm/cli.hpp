#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dcm::cli {

/// Process exit codes. Stable: scripts depend on them.
enum ExitCode : int {
  kOk = 0,
  kConfig = 1,
  kIo = 2,
  kTrainingAborted = 3,
  kCheckpoint = 4,
  kPairing = 5,
  kAblationPartial = 6,
};

/// Name of the resolved-configuration snapshot every command writes under its output directory.
inline constexpr const char* kResolvedConfigName = "resolved_config.json";

/// Parses `args` (without the program name) and runs the selected subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

/// Renders the records of a loss_log.jsonl file as a line plot (one curve per component).
void write_loss_plot(const std::filesystem::path& log_path, const std::filesystem::path& png_path);

}  // namespace dcm::cli
