#ifndef CHARFUSE_ERROR_HPP
#define CHARFUSE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace charfuse {

enum class ErrorKind {
  Usage,       // bad flags / configuration
  Data,        // malformed or inconsistent input data
  Io,          // filesystem failures
  Shape,       // tensor shape mismatch
  Policy,      // operation precondition violated (e.g. word too short)
  Degenerate,  // bounded retries exhausted without a valid draw
  Numerical,   // non-finite values, failed gradient check
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  // Process exit code for CLI reporting: 1 usage, 2 data, 3 numerical.
  int exit_code() const {
    switch (kind_) {
      case ErrorKind::Usage:
        return 1;
      case ErrorKind::Numerical:
        return 3;
      default:
        return 2;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace charfuse

#endif  // CHARFUSE_ERROR_HPP
