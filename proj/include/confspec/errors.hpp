#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace confspec {

enum class ErrorKind {
  validation,
  budget_exceeded,
  contract_violation,
  oracle,
  escalation,
  undefined_rate,
  backend,
  protocol,
  unverifiable,
  configuration,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::budget_exceeded: return "budget_exceeded";
    case ErrorKind::contract_violation: return "contract_violation";
    case ErrorKind::oracle: return "oracle";
    case ErrorKind::escalation: return "escalation";
    case ErrorKind::undefined_rate: return "undefined_rate";
    case ErrorKind::backend: return "backend";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::unverifiable: return "unverifiable";
    case ErrorKind::configuration: return "configuration";
  }
  return "unknown";
}

/// Base of every exception thrown by the library. `kind()` lets callers
/// dispatch without a dynamic_cast ladder.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class BudgetError : public Error {
 public:
  BudgetError(std::size_t used, std::size_t requested, std::size_t budget)
      : Error(ErrorKind::budget_exceeded,
              "token budget exceeded: used " + std::to_string(used) + " + " +
                  std::to_string(requested) + " > " + std::to_string(budget)) {}
};

class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error(ErrorKind::contract_violation, what) {}
};

/// Raised by the simulated-world equivalence oracle on step text it cannot parse.
class OracleError : public Error {
 public:
  explicit OracleError(const std::string& what) : Error(ErrorKind::oracle, what) {}
};

class UndefinedRateError : public Error {
 public:
  explicit UndefinedRateError(const std::string& what) : Error(ErrorKind::undefined_rate, what) {}
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field_path, const std::string& what)
      : Error(ErrorKind::configuration, field_path + ": " + what), field_path_(std::move(field_path)) {}
  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

/// Transport-level failure after all retries were spent. Carries one line per attempt.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, std::vector<std::string> attempts)
      : Error(ErrorKind::backend, what), attempts_(std::move(attempts)) {}
  const std::vector<std::string>& attempts() const noexcept { return attempts_; }

 private:
  std::vector<std::string> attempts_;
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ErrorKind::protocol, what) {}
};

/// The verifier answered, but neither the accept nor the reject class token
/// appeared among the returned alternatives.
class UnverifiableError : public Error {
 public:
  explicit UnverifiableError(const std::string& what) : Error(ErrorKind::unverifiable, what) {}
};

}  // namespace confspec
