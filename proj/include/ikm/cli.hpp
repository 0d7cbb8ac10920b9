#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ikm::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

// Runs one subcommand (train, eval, infer, gradcheck, count, degrade,
// attn-dump). args excludes the program name. Thread count comes from the
// IKM_NUM_THREADS environment variable (default 1).
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace ikm::cli
