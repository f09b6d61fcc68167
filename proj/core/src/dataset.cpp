#include "qrsub/dataset.hpp"

#include "qrsub/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qrsub {

void Dataset::validate() const {
  if (x.rows() < 1) throw ShapeError("dataset has no rows");
  if (x.cols() < 1) throw ShapeError("dataset has no columns");
  if (y.size() != x.rows()) {
    throw ShapeError("x has " + std::to_string(x.rows()) + " rows but y has " +
                     std::to_string(y.size()));
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw InvalidArgument("dataset contains non-finite values");
  }
  if (has_intercept && !(x.col(0).array() == 1.0).all()) {
    throw InvalidArgument("intercept column is not identically 1");
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

bool parse_double(std::string_view field, double& value) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  return ec == std::errc() && ptr == field.data() + field.size() && std::isfinite(value);
}

}  // namespace

Dataset parse_csv(std::string_view text, const CsvOptions& options) {
  std::vector<std::vector<std::string_view>> rows;
  std::vector<std::string_view> header;
  bool header_pending = options.has_header;

  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    if (header_pending) {
      header = split_fields(line);
      header_pending = false;
      continue;
    }
    rows.push_back(split_fields(line));
  }
  if (rows.empty()) throw ShapeError("CSV input has no data rows");

  const std::size_t width = rows.front().size();
  if (options.has_header && header.size() != width) {
    throw ShapeError("header has " + std::to_string(header.size()) +
                     " fields but data rows have " + std::to_string(width));
  }
  if (width < 2) throw ShapeError("CSV needs a response column and at least one predictor");

  std::size_t response = 0;
  if (const auto* name = std::get_if<std::string>(&options.response)) {
    if (!options.has_header) throw InvalidArgument("response given by name but CSV has no header");
    auto it = std::find(header.begin(), header.end(), *name);
    if (it == header.end()) throw InvalidArgument("response column '" + *name + "' not in header");
    response = static_cast<std::size_t>(it - header.begin());
  } else {
    auto idx = std::get<Index>(options.response);
    if (idx < 0 || static_cast<std::size_t>(idx) >= width) {
      throw InvalidArgument("response column index " + std::to_string(idx) + " out of range");
    }
    response = static_cast<std::size_t>(idx);
  }

  const Index n = static_cast<Index>(rows.size());
  const Index offset = options.add_intercept ? 1 : 0;
  const Index p = static_cast<Index>(width) - 1 + offset;
  Dataset data;
  data.x.resize(n, p);
  data.y.resize(n);
  data.has_intercept = options.add_intercept;

  for (Index i = 0; i < n; ++i) {
    const auto& fields = rows[static_cast<std::size_t>(i)];
    if (fields.size() != width) {
      throw ShapeError("row " + std::to_string(i) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(width));
    }
    if (options.add_intercept) data.x(i, 0) = 1.0;
    Index col = offset;
    for (std::size_t j = 0; j < width; ++j) {
      double v = 0.0;
      if (!parse_double(fields[j], v)) {
        throw ParseError(static_cast<std::size_t>(i), j,
                         "'" + std::string(fields[j]) + "' is not a finite number");
      }
      if (j == response) {
        data.y(i) = v;
      } else {
        data.x(i, col++) = v;
      }
    }
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return parse_csv(buf.str(), options);
}

std::string to_csv(const Dataset& data) {
  std::string out;
  char num[32];
  for (Index j = 0; j < data.n_cols(); ++j) {
    if (j == 0 && data.has_intercept) {
      out += "intercept,";
    } else {
      out += "x" + std::to_string(j) + ",";
    }
  }
  out += "y\n";
  for (Index i = 0; i < data.n_rows(); ++i) {
    for (Index j = 0; j < data.n_cols(); ++j) {
      std::snprintf(num, sizeof num, "%.17g,", data.x(i, j));
      out += num;
    }
    std::snprintf(num, sizeof num, "%.17g\n", data.y(i));
    out += num;
  }
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << to_csv(data);
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

Matrix gather_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = x.row(rows[k]);
  return out;
}

Vector gather(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = v(rows[k]);
  return out;
}

}  // namespace qrsub
