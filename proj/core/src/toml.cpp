#include "coldchain/toml.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coldchain::toml {
namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}

struct Cursor {
  const std::string& s;
  size_t pos = 0;
  const std::string& origin;
  int line;

  bool done() const { return pos >= s.size(); }
  char peek() const { return s[pos]; }
  void skip_ws() {
    while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
};

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_basic_string(Cursor& c) {
  ++c.pos;  // opening quote
  std::string out;
  while (true) {
    if (c.done()) fail(c.origin, c.line, "unterminated string");
    char ch = c.s[c.pos++];
    if (ch == '"') return out;
    if (ch == '\\') {
      if (c.done()) fail(c.origin, c.line, "dangling escape");
      char e = c.s[c.pos++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail(c.origin, c.line, std::string("unsupported escape \\") + e);
      }
    } else {
      out += ch;
    }
  }
}

Value parse_value(Cursor& c);

Value parse_array(Cursor& c) {
  Value v;
  v.kind = Value::Kind::Array;
  v.line = c.line;
  ++c.pos;  // '['
  while (true) {
    c.skip_ws();
    if (c.done()) fail(c.origin, c.line, "unterminated array");
    if (c.peek() == ']') {
      ++c.pos;
      return v;
    }
    v.arr.push_back(parse_value(c));
    c.skip_ws();
    if (c.done()) fail(c.origin, c.line, "unterminated array");
    if (c.peek() == ',') {
      ++c.pos;
      continue;
    }
    if (c.peek() == ']') {
      ++c.pos;
      return v;
    }
    fail(c.origin, c.line, "expected ',' or ']' in array");
  }
}

Value parse_scalar(Cursor& c) {
  Value v;
  v.line = c.line;
  size_t start = c.pos;
  while (!c.done()) {
    char ch = c.peek();
    if (ch == ',' || ch == ']' || ch == '#' || ch == ' ' || ch == '\t') break;
    ++c.pos;
  }
  std::string tok = c.s.substr(start, c.pos - start);
  if (tok.empty()) fail(c.origin, c.line, "expected a value");
  if (tok == "true" || tok == "false") {
    v.kind = Value::Kind::Bool;
    v.b = tok == "true";
    return v;
  }
  bool looks_float = tok.find_first_of(".eE") != std::string::npos &&
                     tok.find_first_not_of("+-0123456789.eE") == std::string::npos;
  bool looks_inf_nan = tok == "inf" || tok == "+inf" || tok == "-inf" || tok == "nan";
  const char* cs = tok.c_str();
  char* end = nullptr;
  if (!looks_float && !looks_inf_nan) {
    long long iv = std::strtoll(cs, &end, 10);
    if (end && *end == '\0' && end != cs) {
      v.kind = Value::Kind::Int;
      v.i = iv;
      v.f = static_cast<double>(iv);
      return v;
    }
  }
  double fv = std::strtod(cs, &end);
  if (end && *end == '\0' && end != cs) {
    v.kind = Value::Kind::Float;
    v.f = fv;
    return v;
  }
  fail(c.origin, c.line, "cannot parse value '" + tok + "'");
}

Value parse_value(Cursor& c) {
  c.skip_ws();
  if (c.done()) fail(c.origin, c.line, "expected a value");
  char ch = c.peek();
  if (ch == '"') {
    Value v;
    v.kind = Value::Kind::String;
    v.line = c.line;
    v.s = parse_basic_string(c);
    return v;
  }
  if (ch == '[') return parse_array(c);
  return parse_scalar(c);
}

// A dotted sequence of bare or quoted keys, joined with '.'.
std::string parse_key(Cursor& c) {
  std::string key;
  while (true) {
    c.skip_ws();
    if (c.done()) fail(c.origin, c.line, "expected a key");
    if (c.peek() == '"') {
      key += parse_basic_string(c);
    } else {
      size_t start = c.pos;
      while (!c.done() && is_bare_key_char(c.peek())) ++c.pos;
      if (c.pos == start) fail(c.origin, c.line, "expected a key");
      key += c.s.substr(start, c.pos - start);
    }
    c.skip_ws();
    if (!c.done() && c.peek() == '.') {
      ++c.pos;
      key += '.';
      continue;
    }
    return key;
  }
}

// Strips a trailing comment that is not inside a basic string.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (ch == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (ch == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const char* kind_name(Value::Kind k) {
  switch (k) {
    case Value::Kind::Bool: return "bool";
    case Value::Kind::Int: return "integer";
    case Value::Kind::Float: return "float";
    case Value::Kind::String: return "string";
    case Value::Kind::Array: return "array";
  }
  return "?";
}

[[noreturn]] void type_fail(const Value& v, const char* wanted) {
  throw std::runtime_error("config line " + std::to_string(v.line) + ": expected " + wanted +
                           ", found " + kind_name(v.kind));
}

}  // namespace

bool Value::as_bool() const {
  if (kind != Kind::Bool) type_fail(*this, "bool");
  return b;
}

long long Value::as_int() const {
  if (kind != Kind::Int) type_fail(*this, "integer");
  return i;
}

double Value::as_double() const {
  if (kind != Kind::Int && kind != Kind::Float) type_fail(*this, "number");
  return f;
}

const std::string& Value::as_string() const {
  if (kind != Kind::String) type_fail(*this, "string");
  return s;
}

std::vector<double> Value::as_double_array() const {
  if (kind != Kind::Array) type_fail(*this, "array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const Value& v : arr) out.push_back(v.as_double());
  return out;
}

std::vector<std::string> Value::as_string_array() const {
  if (kind != Kind::Array) type_fail(*this, "array");
  std::vector<std::string> out;
  out.reserve(arr.size());
  for (const Value& v : arr) out.push_back(v.as_string());
  return out;
}

Table parse(const std::string& text, const std::string& origin) {
  Table table;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.size() < 2 || line.back() != ']')
        fail(origin, line_no, "malformed table header");
      if (line[1] == '[') fail(origin, line_no, "arrays of tables are not supported");
      std::string inner = trim(line.substr(1, line.size() - 2));
      Cursor c{inner, 0, origin, line_no};
      section = parse_key(c);
      c.skip_ws();
      if (!c.done()) fail(origin, line_no, "trailing characters after table header");
      continue;
    }
    Cursor c{line, 0, origin, line_no};
    std::string key = parse_key(c);
    c.skip_ws();
    if (c.done() || c.peek() != '=') fail(origin, line_no, "expected '=' after key");
    ++c.pos;
    Value v = parse_value(c);
    v.line = line_no;
    c.skip_ws();
    if (!c.done()) fail(origin, line_no, "trailing characters after value");
    std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) fail(origin, line_no, "duplicate key '" + full + "'");
    table.emplace(std::move(full), std::move(v));
  }
  return table;
}

Table parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool has(const Table& t, const std::string& key) { return t.count(key) > 0; }

const Value& require(const Table& t, const std::string& key) {
  auto it = t.find(key);
  if (it == t.end()) throw std::runtime_error("missing required config key '" + key + "'");
  return it->second;
}

bool get_bool(const Table& t, const std::string& key, bool dflt) {
  auto it = t.find(key);
  return it == t.end() ? dflt : it->second.as_bool();
}

long long get_int(const Table& t, const std::string& key, long long dflt) {
  auto it = t.find(key);
  return it == t.end() ? dflt : it->second.as_int();
}

double get_double(const Table& t, const std::string& key, double dflt) {
  auto it = t.find(key);
  return it == t.end() ? dflt : it->second.as_double();
}

std::string get_string(const Table& t, const std::string& key, const std::string& dflt) {
  auto it = t.find(key);
  return it == t.end() ? dflt : it->second.as_string();
}

std::vector<double> get_double_array(const Table& t, const std::string& key,
                                     const std::vector<double>& dflt) {
  auto it = t.find(key);
  return it == t.end() ? dflt : it->second.as_double_array();
}

std::vector<std::string> get_string_array(const Table& t, const std::string& key,
                                          const std::vector<std::string>& dflt) {
  auto it = t.find(key);
  return it == t.end() ? dflt : it->second.as_string_array();
}

}  // namespace coldchain::toml
