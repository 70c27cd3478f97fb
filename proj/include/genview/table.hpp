#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "genview/errors.hpp"

namespace genview {

// Shortest round-trip decimal form; keeps text outputs byte-deterministic.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw FormatError("cannot parse '" + std::string(text) + "' as a number (" + what + ")");
  }
  return v;
}

inline std::int64_t parse_int(std::string_view text, const std::string& what) {
  std::int64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw FormatError("cannot parse '" + std::string(text) + "' as an integer (" + what + ")");
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view text, const std::string& what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw FormatError("cannot parse '" + std::string(text) + "' as an unsigned integer (" + what + ")");
  }
  return v;
}

// UTF-8 TSV with a header row. Cells may not contain tabs or newlines.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  int require_column(const std::string& name) const {
    const int i = column(name);
    if (i < 0) throw FormatError("table is missing column '" + name + "'");
    return i;
  }
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cells;
}

}  // namespace detail

inline Table read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw MissingInput("cannot open '" + path + "'");
  Table table;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path + "' has no header row");
  table.columns = detail::split_tabs(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_tabs(line);
    if (cells.size() != table.columns.size()) {
      throw FormatError("'" + path + "' row has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(table.columns.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

inline void write_tsv(const std::string& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);  // binary: no newline translation
  if (!out.is_open()) throw FormatError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out << '\t';
    out << table.columns[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << '\t';
      out << row[i];
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw FormatError("write failed for '" + path + "'");
}

}  // namespace genview
