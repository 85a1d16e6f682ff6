#pragma once

#include <stdexcept>
#include <string>

namespace manip {

// Error categories map onto CLI exit codes: usage -> 1, data -> 2, numeric -> 3.
enum class ErrorKind { Usage, Data, Numeric, Logic };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::Usage, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::Data, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::Numeric, msg); }
inline Error logic_error(const std::string& msg) { return Error(ErrorKind::Logic, msg); }

}  // namespace manip
