#pragma once

#include <stdexcept>
#include <string>

namespace bicl {

/// Malformed configuration or CLI input. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A constructed-transformer check (TV bound, norm bound) did not hold. Exit code 3.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf in a forward or backward pass, or a diverging iteration. Exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No context row matches the query's parent assignment, so the
/// frequency-count estimate (and the constructed model's guarantee) is undefined.
class EmptyMatchSet : public std::runtime_error {
 public:
  explicit EmptyMatchSet(int target)
      : std::runtime_error("no context row matches the parent assignment of variable " +
                           std::to_string(target)),
        target_(target) {}
  int target() const noexcept { return target_; }

 private:
  int target_;
};

}  // namespace bicl
