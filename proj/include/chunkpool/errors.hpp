#pragma once

#include <stdexcept>
#include <string>

namespace chunkpool {

// Shape/length mismatches between tensors or sequences.
class ShapeError : public std::invalid_argument {
  public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Input outside the mathematical domain of an operation (log of a
// non-positive value, a softmax row with no unmasked entry).
class DomainError : public std::domain_error {
  public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// An index (token id, row, chunk) outside its valid range.
class IndexError : public std::out_of_range {
  public:
    explicit IndexError(const std::string& what) : std::out_of_range(what) {}
};

// Invalid configuration: bad hyperparameter, malformed vocabulary file,
// inconsistent cross-field constraints.
class ConfigError : public std::invalid_argument {
  public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent corpus data (parse failures, unknown labels,
// duplicate ids, misaligned prediction/gold pairs).
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable, wrong-version, or corrupt checkpoint file.
class CheckpointError : public std::runtime_error {
  public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value encountered during training.
class NumericError : public std::runtime_error {
  public:
    NumericError(const std::string& what, std::size_t epoch)
        : std::runtime_error(what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

  private:
    std::size_t epoch_;
};

}  // namespace chunkpool
