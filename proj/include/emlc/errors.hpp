#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace emlc {

/// Bad input: violated invariants, malformed configuration, unknown keys.
/// Carries every message found, not only the first.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& message)
      : std::invalid_argument(message), messages_{message} {}
  explicit ValidationError(std::vector<std::string> messages)
      : std::invalid_argument(join(messages)), messages_(std::move(messages)) {}

  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  static std::string join(const std::vector<std::string>& messages) {
    std::string out;
    for (const auto& m : messages) {
      if (!out.empty()) out += "; ";
      out += m;
    }
    return out;
  }
  std::vector<std::string> messages_;
};

/// A numerical procedure failed: no convergence, unstable dynamics,
/// a formula evaluated outside its domain.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InstabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace emlc
