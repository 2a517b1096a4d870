#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nlcnn {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  ///< failed gradient check or non-finite loss
  kExitUsage = 2,    ///< bad arguments, config, or I/O
};

/// Runs the command line `args` (without the program name), e.g.
/// {"train", "--config", "run.json", "--seed", "3"}. Subcommands: gradcheck,
/// train, eval, synth, augment.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nlcnn
