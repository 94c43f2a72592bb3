#pragma once

#include <stdexcept>
#include <string>

namespace vsd {

// Bad values or mismatched dimensions in caller-supplied configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition that calling code must guarantee was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Structurally valid input for which the operation has no defined result,
// e.g. computing metrics when not a single pixel is valid.
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while reading external data. Messages name the offending file.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value surfaced during optimization or evaluation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vsd
