#pragma once

#include <iosfwd>
#include <stdexcept>

namespace bks::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

// Bad flags, bad values or an unusable configuration.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Entry point of the `bks` tool: synth, train, deblur, retrieve, transfer,
// eval. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bks::cli
