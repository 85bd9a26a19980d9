#pragma once

#include <string>

#include "eqco/csv.hpp"

namespace eqco {

struct ChartSpec {
  std::string title;
  std::string x_column;
  std::string y_column;
  /// Optional column whose distinct values split rows into series.
  std::string series_column;
  /// Axis captions; default to the column names.
  std::string x_label;
  std::string y_label;
};

/// Standalone 800x500 SVG line chart with 10-interval axes and a fixed
/// 8-colour palette. Output bytes depend only on the input table. Rows whose
/// x or y cell is not numeric (status rows) are skipped. Throws UsageError
/// for a missing column.
std::string render_svg(const CsvLog& csv, const ChartSpec& spec);

}  // namespace eqco
