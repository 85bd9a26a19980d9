#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace eqco {

/// Header plus string cells. Numeric cells are written with `format_real`
/// (shortest round-trip representation), so parse(render()) reproduces the
/// table exactly. Quoting follows RFC 4180.
class CsvLog {
 public:
  CsvLog() = default;
  explicit CsvLog(std::vector<std::string> header);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t column_count() const { return header_.size(); }

  /// Throws UsageError if the row width differs from the header.
  void add_row(std::vector<std::string> row);
  void append(const CsvLog& other);

  /// Throws UsageError for an unknown column.
  std::size_t column_index(const std::string& name) const;
  bool has_column(const std::string& name) const;

  std::string render() const;
  static CsvLog parse(const std::string& text);

  void write(const std::string& path) const;
  static CsvLog read(const std::string& path);

  bool operator==(const CsvLog& other) const = default;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Shortest decimal text that parses back to exactly `value`. Throws
/// NumericError for NaN or infinity; CSV files never carry them.
std::string format_real(double value);
std::string format_count(std::size_t value);
/// Strict parse of a whole cell; returns false for non-numeric text.
bool parse_real(const std::string& cell, double& out);

}  // namespace eqco
