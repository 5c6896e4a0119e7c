#pragma once

#include <stdexcept>
#include <string>

namespace mgm {

// Thrown when a computation produces NaN/Inf or an iterative solver cannot
// reach its tolerance.  Training loops attach the path of the last good
// checkpoint so callers can recover.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, std::string checkpoint = "")
      : std::runtime_error(what), last_good_checkpoint_(std::move(checkpoint)) {}

  const std::string& last_good_checkpoint() const { return last_good_checkpoint_; }

 private:
  std::string last_good_checkpoint_;
};

// File-level failures (missing dataset, unwritable output, malformed file).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mgm
