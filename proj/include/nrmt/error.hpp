#pragma once

#include <stdexcept>
#include <string>

namespace nrmt {

// Coarse error category, mapped onto C-API status codes and CLI exit codes.
enum class ErrorKind {
  usage,     // bad arguments / malformed request
  data,      // malformed input data, config contradiction, numeric failure
  io,        // file system problems
  internal,  // broken invariant inside the library
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nrmt
