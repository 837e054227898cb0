#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gprodom/errors.hpp"

namespace gprodom::csv {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& field, const std::string& file,
                           size_t line_no) {
  double v = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{})
    throw DataError(file + ":" + std::to_string(line_no) +
                    ": cannot parse number '" + field + "'");
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Table out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (out.header.empty()) {
      out.header = fields;
      continue;
    }
    if (fields.size() != out.header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(out.header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    std::vector<double> row(fields.size());
    for (size_t c = 0; c < fields.size(); ++c)
      row[c] = parse_double(fields[c], path, line_no);
    out.rows.push_back(std::move(row));
  }
  if (out.header.empty()) throw DataError(path + ": empty file");
  return out;
}

inline int col_index(const Table& csv, const std::string& name,
                     const std::string& path) {
  const auto it = std::find(csv.header.begin(), csv.header.end(), name);
  if (it == csv.header.end())
    throw DataError(path + ": missing column '" + name + "'");
  return static_cast<int>(it - csv.header.begin());
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  return out;
}

}  // namespace gprodom::csv
