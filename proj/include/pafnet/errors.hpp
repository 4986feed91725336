#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pafnet {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input / configuration errors (CLI exit code 2).
class InputError : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public InputError {
public:
    using InputError::InputError;
};

class KTooLarge : public InputError {
public:
    using InputError::InputError;
};

class FTooLarge : public InputError {
public:
    using InputError::InputError;
};

class ShapeMismatch : public InputError {
public:
    using InputError::InputError;
};

class PlanShapeMismatch : public ShapeMismatch {
public:
    using ShapeMismatch::ShapeMismatch;
};

class RangeMismatch : public ShapeMismatch {
public:
    using ShapeMismatch::ShapeMismatch;
};

class TooShort : public InputError {
public:
    using InputError::InputError;
};

class InvalidConfig : public InputError {
public:
    using InputError::InputError;
};

class FileError : public InputError {
public:
    using InputError::InputError;
};

class MissingColumn : public InputError {
public:
    using InputError::InputError;
};

class NonNumericCell : public InputError {
public:
    NonNumericCell(std::size_t row, std::size_t column, const std::string& column_name,
                   const std::string& cell)
        : InputError("non-numeric cell at row " + std::to_string(row) + ", column " +
                     std::to_string(column) + " (" + column_name + "): '" + cell + "'"),
          row_(row),
          column_(column) {}

    /// 1-based data row (header excluded) and 0-based column position in the file.
    std::size_t row() const { return row_; }
    std::size_t column() const { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

class RowCountMismatch : public InputError {
public:
    using InputError::InputError;
};

class UnhandledGap : public InputError {
public:
    using InputError::InputError;
};

// Persisted-state errors (CLI exit code 3).
class StateError : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public StateError {
public:
    using StateError::StateError;
};

class CheckpointMismatch : public StateError {
public:
    using StateError::StateError;
};

// Numeric failure during training (CLI exit code 4).
class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(std::size_t epoch, std::size_t batch, double loss)
        : Error("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                ", batch " + std::to_string(batch)),
          epoch_(epoch),
          batch_(batch),
          loss_(loss) {}

    std::size_t epoch() const { return epoch_; }
    std::size_t batch() const { return batch_; }
    double loss() const { return loss_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
    double loss_;
};

} // namespace pafnet
