#pragma once

#include <stdexcept>
#include <string>

namespace cammel {

// Process exit codes used by the command-line front end.
enum class ErrorKind { usage = 1, data = 2, numerical = 3 };

// Every failure raised by the library carries a module-qualified code such as
// "linalg.ConstantColumn" so callers can branch on it and the CLI can print it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string code, const std::string& detail,
        ErrorKind kind = ErrorKind::data)
      : std::runtime_error(module + "." + code + ": " + detail),
        module_(std::move(module)),
        code_(std::move(code)),
        kind_(kind) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& code() const noexcept { return code_; }
  std::string qualified() const { return module_ + "." + code_; }
  ErrorKind kind() const noexcept { return kind_; }

 private:
  std::string module_;
  std::string code_;
  ErrorKind kind_;
};

}  // namespace cammel
