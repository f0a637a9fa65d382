#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace annoclean {

/// Entry point of the `annoclean` tool. Returns the process exit code
/// (0 ok, 2 input error, 3 collision, 4 runtime failure).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Highest-numbered `epoch_<n>.ckpt` in a run directory.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace annoclean
