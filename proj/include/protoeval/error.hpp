#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace protoeval {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid manifest, config file, or argument combination. Raised before any
/// network traffic; the CLI maps it to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A corpus document could not be read. entry_index is the zero-based
/// position of the offending entry, or -1 when the whole document is bad.
class IngestError : public Error {
 public:
  IngestError(const std::string& what, long entry_index)
      : Error(what), entry_index_(entry_index) {}
  long entry_index() const noexcept { return entry_index_; }

 private:
  long entry_index_;
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, int status = 0, bool retryable = false)
      : Error(what), status_(status), retryable_(retryable) {}
  int status() const noexcept { return status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

/// Credentials missing or rejected. Never retried.
class AuthError : public ProviderError {
 public:
  explicit AuthError(const std::string& what, int status = 0)
      : ProviderError(what, status, false) {}
};

/// The judge never produced a usable score for one criterion.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::vector<std::string> raw_responses)
      : Error(what), raw_responses_(std::move(raw_responses)) {}
  const std::vector<std::string>& raw_responses() const noexcept { return raw_responses_; }

 private:
  std::vector<std::string> raw_responses_;
};

}  // namespace protoeval
