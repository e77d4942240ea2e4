#pragma once

#include <stdexcept>
#include <string>

namespace gpdrf {

// Stable error categories; the C API maps these 1:1 onto gpdrf_status codes.
enum class ErrorCode : int {
  invalid_argument = 1,
  config = 2,
  parse = 3,
  io = 4,
  shape = 5,
  not_positive_definite = 6,
  diverged = 7,
  task_mismatch = 8,
  checkpoint = 9,
  check_failed = 10,
  internal = 11,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCode::config, w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorCode::parse, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCode::io, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCode::shape, w) {}
};
struct NotPositiveDefiniteError : Error {
  explicit NotPositiveDefiniteError(const std::string& w)
      : Error(ErrorCode::not_positive_definite, w) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& w)
      : Error(ErrorCode::diverged, w) {}
};
struct TaskMismatchError : Error {
  explicit TaskMismatchError(const std::string& w)
      : Error(ErrorCode::task_mismatch, w) {}
};
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& w)
      : Error(ErrorCode::checkpoint, w) {}
};
struct InvalidArgumentError : Error {
  explicit InvalidArgumentError(const std::string& w)
      : Error(ErrorCode::invalid_argument, w) {}
};

}  // namespace gpdrf
