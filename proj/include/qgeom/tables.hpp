#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "qgeom/common.hpp"

namespace qgeom {

/// Fixed decimal formatting shared by every emitted table: 17 significant
/// digits round-trips IEEE doubles exactly, so reruns are byte-identical.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string format_int(long long v) { return std::to_string(v); }

inline std::string csv_escape(const std::string& cell) {
  const bool needs_quotes = cell.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quotes) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

/// In-memory rectangular table with string cells; serializes to RFC-4180 CSV
/// with a header row and '\n' line endings.
class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {
    if (columns_.empty()) throw ValidationError("Table: at least one column required");
  }

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) {
      throw ValidationError("Table: row has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(columns_.size()));
    }
    rows_.push_back(std::move(cells));
  }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t num_rows() const { return rows_.size(); }

  std::string to_csv() const {
    std::string out;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (j > 0) out += ',';
      out += csv_escape(columns_[j]);
    }
    out += '\n';
    for (const auto& row : rows_) {
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j > 0) out += ',';
        out += csv_escape(row[j]);
      }
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Binary-mode write so the emitted bytes are exactly the string contents on
/// every platform.
inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace qgeom
