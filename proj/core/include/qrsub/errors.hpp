#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrsub {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with inputs: files, shapes, parameter ranges.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t row, std::size_t col, const std::string& what)
      : DataError("parse error at row " + std::to_string(row) + ", column " +
                  std::to_string(col) + ": " + what),
        row_(row),
        col_(col) {}

  // 0-based data row (header excluded) and 0-based column.
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class InvalidArgument : public DataError {
 public:
  using DataError::DataError;
};

// Numerical failures: singular systems, degenerate estimates, solver trouble.
class NumericError : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public NumericError {
 public:
  using NumericError::NumericError;
};

class NotPositiveDefinite : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingularMatrix : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateWeights : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegeneratePilot : public NumericError {
 public:
  using NumericError::NumericError;
};

class MissingVariance : public NumericError {
 public:
  using NumericError::NumericError;
};

class BatchFailure : public NumericError {
 public:
  BatchFailure(std::vector<std::size_t> failed, const std::string& first_reason)
      : NumericError(describe(failed, first_reason)), failed_(std::move(failed)) {}

  const std::vector<std::size_t>& failed_batches() const noexcept { return failed_; }

 private:
  static std::string describe(const std::vector<std::size_t>& failed,
                              const std::string& reason) {
    std::string msg = std::to_string(failed.size()) + " batch(es) failed:";
    for (auto b : failed) msg += " " + std::to_string(b);
    return msg + " (first: " + reason + ")";
  }

  std::vector<std::size_t> failed_;
};

}  // namespace qrsub
