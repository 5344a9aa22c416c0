#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "wicsim/common.hpp"

namespace wicsim {

// Round-trippable double formatting (%.17g) so written files reload bit-exact
// and identical runs produce byte-identical output.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    require(pos == s.size(), where, ": trailing characters in numeric field '", s, "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(where, ": cannot parse '", s, "' as a number");
  }
}

inline long parse_long(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    require(pos == s.size(), where, ": trailing characters in integer field '", s, "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(where, ": cannot parse '", s, "' as an integer");
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }

  int require_col(const std::string& name, const std::string& path) const {
    int c = col(name);
    require(c >= 0, path, ": missing required column '", name, "'");
    return c;
  }

  // row is 0-based data row; reported 1-based counting the header
  const std::string& at(std::size_t row, int col_idx, const std::string& path) const {
    require(col_idx >= 0 && static_cast<std::size_t>(col_idx) < rows[row].size(), path, ": row ",
            row + 2, " has no column index ", col_idx);
    return rows[row][static_cast<std::size_t>(col_idx)];
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open file: ", path);
  CsvTable t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() && in.eof()) break;
    auto fields = split_csv_line(line);
    if (first) {
      t.header = fields;
      first = false;
    } else {
      if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
      require(fields.size() == t.header.size(), path, ": row ", lineno, " has ", fields.size(),
              " fields, expected ", t.header.size());
      t.rows.push_back(std::move(fields));
    }
  }
  require(!first, path, ": empty file, expected a header row");
  return t;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  require(out.good(), "cannot open file for writing: ", path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    require(row.size() == header.size(), path, ": internal row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  require(out.good(), "write failed: ", path);
}

}  // namespace wicsim
