#pragma once

#include <stdexcept>
#include <string>

namespace rdsync {

/// Precondition or type-invariant violation on a caller-supplied value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative scheme did not settle (reducible or periodic chain, or too few iterations).
class NotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (I - Mbar) is singular: absorption never happens from some unsynchronized state.
class InfiniteExpectedTime : public std::runtime_error {
 public:
  InfiniteExpectedTime() : std::runtime_error("infinite expected time: (I - Mbar) is singular") {}
};

/// Too few samples for a statistical estimate.
class InsufficientSamples : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace rdsync
