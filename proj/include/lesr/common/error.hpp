#pragma once

#include <stdexcept>
#include <string>

namespace lesr {

// Bad argument, shape, or configuration value supplied by the caller.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numeric input outside the domain of an operation (NaN, Inf, zero norm).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Input data that cannot be used: malformed rows, unknown ids, empty corpora.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long batch_index)
      : std::runtime_error(what), batch_index_(batch_index) {}
  long batch_index() const { return batch_index_; }

 private:
  long batch_index_;
};

// Error codes for the binary snapshot formats (embedding cache, retrieval
// sets, corpus snapshot, checkpoints).
enum class FormatErrc {
  kOpenFailed = 1,
  kBadMagic = 2,
  kBadVersion = 3,
  kTruncated = 4,
  kChecksum = 5,
  kInconsistent = 6,
};

const char* to_string(FormatErrc code);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

// Transient failure of a remote call; eligible for retry.
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lesr
