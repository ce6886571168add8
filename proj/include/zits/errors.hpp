#pragma once

#include <stdexcept>
#include <string>

namespace zits {

/// Shape or index mismatch between operands.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Input data violates a documented contract (bad file, bad triple, bad range).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine produced a non-finite value or cannot proceed.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace zits
