#pragma once

#include <stdexcept>
#include <string>

namespace driverep {

// Invalid user-supplied configuration (unknown route, out-of-range field).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: calling an operation in a state that forbids it, e.g. stepping
// a finished episode.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Shape or layout disagreement between a producer and a consumer, e.g. a
// checkpoint whose declared output shape does not match its parameters.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or damaged on-disk artifact.
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerically meaningless input, e.g. a zero-norm embedding fed to a cosine
// similarity.
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace driverep
