#pragma once

// Minimal CSV output with a fixed float format so golden files compare byte-for-byte.

#include <cstdio>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace trapsim::csv {

/// 17 significant digits, '%.17g'. Negative zero is printed as 0.
inline std::string format_double(double v) {
  if (v == 0.0) v = 0.0;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Quote a field only when it needs it.
inline std::string escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class Row {
 public:
  Row& operator<<(double v) { return add(format_double(v)); }
  Row& operator<<(int v) { return add(std::to_string(v)); }
  Row& operator<<(long v) { return add(std::to_string(v)); }
  Row& operator<<(unsigned long v) { return add(std::to_string(v)); }
  Row& operator<<(unsigned v) { return add(std::to_string(v)); }
  Row& operator<<(const std::string& v) { return add(escape(v)); }
  Row& operator<<(const char* v) { return add(escape(v)); }

  const std::vector<std::string>& fields() const { return fields_; }

 private:
  Row& add(std::string s) {
    fields_.push_back(std::move(s));
    return *this;
  }
  std::vector<std::string> fields_;
};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void header(std::initializer_list<std::string_view> names) {
    bool first = true;
    for (auto n : names) {
      if (!first) os_ << ',';
      os_ << escape(n);
      first = false;
    }
    os_ << '\n';
  }
  void header(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) os_ << (i ? "," : "") << escape(names[i]);
    os_ << '\n';
  }
  void write(const Row& row) {
    const auto& f = row.fields();
    for (std::size_t i = 0; i < f.size(); ++i) os_ << (i ? "," : "") << f[i];
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

}  // namespace trapsim::csv
