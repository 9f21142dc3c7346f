#pragma once

#include <stdexcept>
#include <string>

namespace dfusion {

// Shape or range violations raise std::invalid_argument directly.

/// File could not be read, decoded, or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was invoked before its prerequisites (e.g. a loaded checkpoint) exist.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dfusion
