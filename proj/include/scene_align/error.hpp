#pragma once

#include <stdexcept>
#include <string>

namespace scene_align {

// Bad configuration or input data. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation that could not complete (divergence, no valid candidate).
// The CLI maps this to exit code 1.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scene_align
