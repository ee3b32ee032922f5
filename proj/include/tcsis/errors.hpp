#pragma once

#include <stdexcept>
#include <string>

namespace tcsis {

// Error taxonomy. The CLI maps these onto exit codes:
//   invalid_input / degenerate_input -> 1, capacity_error -> 2,
//   training_failure / sampling_failure -> 3.
struct invalid_input : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct degenerate_input : invalid_input {
  using invalid_input::invalid_input;
};

struct capacity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct state_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct training_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct sampling_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tcsis
