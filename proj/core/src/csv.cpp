#include "coldchain/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coldchain::csv {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // normalizes -0
  // Shortest representation that parses back to the same bits.
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string Writer::cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

Writer::Writer(std::vector<std::string> header) : width_(header.size()) {
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out_ += ',';
    out_ += cell(header[i]);
  }
  out_ += '\n';
}

void Writer::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != width_)
    throw std::invalid_argument("csv::Writer: row width does not match header");
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ += ',';
    out_ += cells[i];
  }
  out_ += '\n';
}

void Writer::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("csv::Writer: cannot open " + path);
  out << out_;
}

int Table::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

Table parse(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    cells.push_back(cur);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

}  // namespace coldchain::csv
