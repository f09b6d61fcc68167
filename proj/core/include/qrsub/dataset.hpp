#pragma once

#include "qrsub/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qrsub {

// Full data: design matrix (row = observation) and response. Immutable
// after construction by convention; every consumer takes it by const ref.
struct Dataset {
  Matrix x;
  Vector y;
  bool has_intercept = false;

  Index n_rows() const noexcept { return x.rows(); }
  Index n_cols() const noexcept { return x.cols(); }

  // Throws ShapeError / InvalidArgument when the invariants do not hold:
  // matching row counts, N >= 1, p >= 1, finite entries, and a column of
  // ones in position 0 when has_intercept is set.
  void validate() const;
};

// Response column selected by header name or by 0-based column index.
using ColumnRef = std::variant<std::string, Index>;

struct CsvOptions {
  bool has_header = true;
  ColumnRef response = Index{0};
  bool add_intercept = false;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options);

// Same parser over in-memory text; used by load_csv and by tests.
Dataset parse_csv(std::string_view text, const CsvOptions& options);

// Writes x columns then y, with a header line, 17 significant digits.
void save_csv(const Dataset& data, const std::filesystem::path& path);
std::string to_csv(const Dataset& data);

// Gathers the given rows into a new design/response pair.
Matrix gather_rows(const Matrix& x, const std::vector<Index>& rows);
Vector gather(const Vector& v, const std::vector<Index>& rows);

}  // namespace qrsub
