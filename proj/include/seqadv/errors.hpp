#pragma once

#include <stdexcept>
#include <string>

namespace seqadv {

// Shape or width disagreement between operands / configs.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Bad flags or invalid option combinations (CLI exit code 1).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Missing/corrupt files, malformed manifests (CLI exit code 2).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf detected during training (CLI exit code 3).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace seqadv
