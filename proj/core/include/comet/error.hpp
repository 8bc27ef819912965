#pragma once

#include <stdexcept>
#include <string>

namespace comet {

/// Error raised by library operations. The code distinguishes broad failure
/// classes so callers can react programmatically; the message carries the
/// offending operation and values for humans.
class Error : public std::runtime_error {
 public:
  enum class Code {
    ShapeMismatch,    // operands do not conform for the requested primitive
    DegenerateInput,  // zero-norm vector, empty set where one is required, ...
    InvalidArgument,  // out-of-range scalar, malformed config value
    InvalidState,     // API misuse: consuming a spent stream, wrong bank mode
    Parse,            // scenario or checkpoint file rejected
    Io,               // filesystem failure
    Diverged,         // training produced non-finite values
  };

  Error(Code code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace comet
