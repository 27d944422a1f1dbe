#pragma once

#include <stdexcept>
#include <string>

namespace raft {

// Input data violates a documented schema or invariant (bad file, bad label,
// mask length mismatch, class too small to split).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Per-token scores do not line up with the encoded sequence.
class AlignmentError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A forward op produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace raft
