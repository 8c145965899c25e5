#pragma once

#include <stdexcept>
#include <string>

namespace nod {

// Error taxonomy shared by the library and the CLI. The kind maps 1:1 onto
// the documented process exit codes.
enum class ErrorKind {
  Internal = 1,
  Config = 2,
  Data = 3,
  Checkpoint = 4,
  Numeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return Error(ErrorKind::Config, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::Data, msg); }
inline Error checkpoint_error(const std::string& msg) { return Error(ErrorKind::Checkpoint, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::Numeric, msg); }
inline Error internal_error(const std::string& msg) { return Error(ErrorKind::Internal, msg); }

}  // namespace nod
