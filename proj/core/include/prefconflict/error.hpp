#pragma once

#include <stdexcept>
#include <string>

namespace prefconflict {

// Error classes map 1:1 onto process exit codes:
//   usage 2, input/parse 3, external-service 4, numerical 5.
enum class ErrorClass : int {
  usage = 2,
  input = 3,
  external = 4,
  numerical = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string message)
      : std::runtime_error(std::move(message)), cls_(cls) {}

  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

 private:
  ErrorClass cls_;
};

struct UsageError : Error {
  explicit UsageError(std::string msg) : Error(ErrorClass::usage, std::move(msg)) {}
};

struct InputError : Error {
  explicit InputError(std::string msg) : Error(ErrorClass::input, std::move(msg)) {}
};

struct ExternalError : Error {
  explicit ExternalError(std::string msg) : Error(ErrorClass::external, std::move(msg)) {}
};

struct NumericalError : Error {
  explicit NumericalError(std::string msg) : Error(ErrorClass::numerical, std::move(msg)) {}
};

}  // namespace prefconflict
