#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qrsub::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kDataError = 3, kNumericError = 4 };

// Runs one invocation; args exclude the program name. Data goes to out, logs to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qrsub::cli
