#pragma once

// Minimal TOML subset for experiment configs: [table] headers, key = value
// pairs with string/bool/integer/float/array values, # comments, and dotted
// keys. Tables flatten into dotted paths ("lattice.nodes"). Not supported:
// inline tables, arrays of tables, multi-line strings, dates. Errors carry
// file:line positions.

#include <map>
#include <string>
#include <vector>

namespace coldchain::toml {

struct Value {
  enum class Kind { Bool, Int, Float, String, Array };
  Kind kind = Kind::String;
  bool b = false;
  long long i = 0;
  double f = 0;
  std::string s;
  std::vector<Value> arr;
  int line = 0;  // source line, for error messages

  // Numeric accessors accept both Int and Float; everything else throws
  // std::runtime_error naming the expected type and source line.
  bool as_bool() const;
  long long as_int() const;
  double as_double() const;
  const std::string& as_string() const;
  std::vector<double> as_double_array() const;
  std::vector<std::string> as_string_array() const;
};

using Table = std::map<std::string, Value>;

Table parse(const std::string& text, const std::string& origin = "<memory>");
Table parse_file(const std::string& path);

bool has(const Table& t, const std::string& key);

// Lookups with defaults; the require_* forms throw when the key is missing.
bool get_bool(const Table& t, const std::string& key, bool dflt);
long long get_int(const Table& t, const std::string& key, long long dflt);
double get_double(const Table& t, const std::string& key, double dflt);
std::string get_string(const Table& t, const std::string& key, const std::string& dflt);
std::vector<double> get_double_array(const Table& t, const std::string& key,
                                     const std::vector<double>& dflt);
std::vector<std::string> get_string_array(const Table& t, const std::string& key,
                                          const std::vector<std::string>& dflt);
const Value& require(const Table& t, const std::string& key);

}  // namespace coldchain::toml
