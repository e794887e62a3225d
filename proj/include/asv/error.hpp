#pragma once

#include <stdexcept>
#include <string>

namespace asv {

// All library failures derive from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  ValidationError(int layer, const std::string& reason)
      : Error(layer < 0 ? reason : "layer " + std::to_string(layer) + ": " + reason),
        layer_index(layer) {}
  int layer_index;  // 1-based, -1 for architecture-level problems
};

struct UnknownName : Error {
  using Error::Error;
};

struct OutOfBounds : Error {
  using Error::Error;
};

struct QuadratureFailure : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct MissingForwardTrace : Error {
  using Error::Error;
};

struct BudgetExceeded : Error {
  using Error::Error;
};

}  // namespace asv
