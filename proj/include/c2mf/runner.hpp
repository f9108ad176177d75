#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

// Command dispatch behind the CLI. Kept in the library so tests can drive the
// pipeline without spawning processes.

namespace c2mf {

struct RunConfig {
  std::string command;          // gen-data | train | eval | sweep | grad-check
  std::string config_path;      // JSON config file
  std::string data_dir;         // dataset directory (gen-data output)
  std::string checkpoint_path;  // eval / sweep input
  std::string out_dir;          // artifact directory

  // flag overrides; flags win over the config file
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> regime;
  std::vector<double> lambda_test;
  std::optional<double> tolerance;  // grad-check pass threshold
};

// Executes the command, writing artifacts under out_dir. Returns the process
// exit code: 0 ok, 1 usage error, 2 data error, 3 numerical failure. Partial
// outputs of a failed run are removed.
int run(const RunConfig& rc, std::ostream& out, std::ostream& err);

}  // namespace c2mf
