#pragma once

#include <stdexcept>
#include <string>

namespace reverbdoa {

// Error taxonomy. The CLI maps these onto exit codes:
// config_error -> 2, io_error -> 3, numeric_error and descendants -> 4.

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands; message carries both shapes.
struct dimension_error : numeric_error {
  using numeric_error::numeric_error;
};

// Value outside the mathematical domain of an operation (e.g. var <= 0).
struct domain_error : numeric_error {
  using numeric_error::numeric_error;
};

// API misuse detected at runtime (non-scalar loss, unnormalized input, ...).
struct contract_error : numeric_error {
  using numeric_error::numeric_error;
};

struct geometry_error : numeric_error {
  using numeric_error::numeric_error;
};

// Requested RT60 is not achievable for the room (Sabine absorption >= 1).
struct infeasible_room_error : numeric_error {
  using numeric_error::numeric_error;
};

struct degenerate_input_error : numeric_error {
  using numeric_error::numeric_error;
};

struct insufficient_length_error : numeric_error {
  using numeric_error::numeric_error;
};

}  // namespace reverbdoa
