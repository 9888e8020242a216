#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "negguide/cli/config.hpp"

namespace negguide::cli {

enum ExitCode : int { kExitOk = 0, kExitMismatch = 1, kExitConfig = 2, kExitIo = 3 };

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Each command writes its files under config.out_dir and returns an exit code.
// Config and IO problems surface as exceptions; run() maps them to codes.
int cmd_sample(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_compare(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_sweep_k(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_hypothesis(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_count_calls(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

struct CallCountRow {
  std::string label;
  std::uint64_t closed_form = 0;
  std::uint64_t instrumented = 0;
};

/// Prints the table; kExitMismatch if any row disagrees.
int report_call_counts(const std::vector<CallCountRow>& rows, std::ostream& out);

// "# negguide <version> config_hash=<hash> command=<name>"
std::string metadata_line(const std::string& config_hash, const std::string& command);

}  // namespace negguide::cli
