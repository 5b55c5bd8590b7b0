#pragma once

// RFC-4180 CSV output. Doubles are written with 17 significant digits so files
// round-trip and reruns compare bitwise.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace vlift {

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << csv_field(fields[i]);
    }
    os_ << "\r\n";
  }

 private:
  std::ostream& os_;
};

}  // namespace vlift
