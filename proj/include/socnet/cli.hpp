// socnet/cli.hpp - experiment command line: synth, train, transfer, eval
#pragma once

#include <string>
#include <vector>

namespace socnet::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitMissingCycles = 3,
  kExitNonFiniteLoss = 4,
  kExitSpecMismatch = 5,
};

int run(int argc, char** argv);
// args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace socnet::cli
