#pragma once

#include <stdexcept>
#include <string>

namespace gossipgrad {

/// Invalid configuration or shape mismatch detected before any training work.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A communication schedule or ring state violated its own contract.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values reached the optimizer.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A cross-node invariant (e.g. replicas equal under all-reduce) broke.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gossipgrad
