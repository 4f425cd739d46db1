#pragma once

#include <stdexcept>
#include <string>

namespace ftgan {

// Error categories. Values are shared with the C API status codes and the
// CLI exit codes, so do not renumber.
enum class ErrorKind : int {
  kInvalidArgument = 2,
  kShape = 3,
  kIo = 4,
  kIntegrity = 5,
  kVersion = 6,
  kStageMismatch = 7,
  kPrecondition = 8,
  kNonFinite = 9,
  kFormat = 10,
  kUnknownTensor = 11,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace ftgan
