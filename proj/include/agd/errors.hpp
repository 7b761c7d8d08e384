#pragma once

#include <stdexcept>
#include <string>

namespace agd {

// Exit-code contract shared by the CLI and the library error types:
// 0 success, 1 verification failure, 2 usage/config error, 3 runtime/numeric.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitConfigError = 2,
  kExitNumericError = 3,
};

struct InvalidParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace agd
