#pragma once

#include <stdexcept>
#include <string>

namespace fairscope {

// Bad arguments to a library call (shape mismatch, empty input, ...).
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// On-disk dataset does not match its manifest.
struct CorruptDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loss or gradients became non-finite. The CLI maps this to exit code 3.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A metric has no defined value on the given records.
struct UndefinedMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fairscope
