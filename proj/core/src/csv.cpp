#include "eqco/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eqco/errors.hpp"

namespace eqco {
namespace {

bool needs_quotes(const std::string& cell) {
  return cell.find_first_of(",\"\r\n") != std::string::npos;
}

void append_cell(std::string& out, const std::string& cell) {
  if (!needs_quotes(cell)) {
    out += cell;
    return;
  }
  out += '"';
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

}  // namespace

CsvLog::CsvLog(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw UsageError("CsvLog: header must not be empty");
}

void CsvLog::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size()) {
    throw UsageError("CsvLog: row has " + std::to_string(row.size()) + " cells, header has " +
                     std::to_string(header_.size()));
  }
  rows_.push_back(std::move(row));
}

void CsvLog::append(const CsvLog& other) {
  if (other.header_ != header_) throw UsageError("CsvLog: cannot append a table with a different header");
  rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

std::size_t CsvLog::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw UsageError("CsvLog: no column named '" + name + "'");
}

bool CsvLog::has_column(const std::string& name) const {
  for (const auto& h : header_) {
    if (h == name) return true;
  }
  return false;
}

std::string CsvLog::render() const {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out += ',';
      append_cell(out, cells[i]);
    }
    out += '\n';
  };
  emit(header_);
  for (const auto& row : rows_) emit(row);
  return out;
}

CsvLog CsvLog::parse(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  bool in_quotes = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      record.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(cell));
      cell.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      cell += c;
    }
  }
  if (in_quotes) throw UsageError("CsvLog::parse: unterminated quoted cell");
  if (any) {
    record.push_back(std::move(cell));
    records.push_back(std::move(record));
  }
  if (records.empty()) throw UsageError("CsvLog::parse: missing header");
  CsvLog log(std::move(records.front()));
  for (std::size_t r = 1; r < records.size(); ++r) log.add_row(std::move(records[r]));
  return log;
}

void CsvLog::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("CsvLog: cannot write " + path);
  out << render();
}

CsvLog CsvLog::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("CsvLog: cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string format_real(double value) {
  if (!std::isfinite(value)) throw NumericError("format_real: non-finite value");
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_count(std::size_t value) { return std::to_string(value); }

bool parse_real(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

}  // namespace eqco
