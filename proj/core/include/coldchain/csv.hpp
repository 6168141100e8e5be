#pragma once

// Minimal CSV writing/reading with deterministic number formatting, so that
// reruns with identical seeds produce byte-identical files.

#include <string>
#include <vector>

namespace coldchain::csv {

// Shortest decimal form that round-trips a double (up to 17 significant
// digits); integral values print without an exponent or trailing zeros.
std::string format_double(double v);

class Writer {
 public:
  explicit Writer(std::vector<std::string> header);

  void add_row(const std::vector<std::string>& cells);
  std::string str() const { return out_; }
  void write_file(const std::string& path) const;

  static std::string cell(double v) { return format_double(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(const std::string& s);

 private:
  size_t width_;
  std::string out_;
};

// Parses a CSV produced by Writer (no quoted commas in numeric tables).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

Table read_file(const std::string& path);
Table parse(const std::string& text);

}  // namespace coldchain::csv
