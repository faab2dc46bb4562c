#include "afree/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace afree {

std::string format_sig(double v, int digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

void Report::add(std::string key, double value) {
  rows_.emplace_back(std::move(key), format_sig(value));
}
void Report::add(std::string key, const std::string& value) {
  rows_.emplace_back(std::move(key), value);
}
void Report::add(std::string key, const char* value) {
  rows_.emplace_back(std::move(key), std::string(value));
}
void Report::add(std::string key, bool value) {
  rows_.emplace_back(std::move(key), value ? "true" : "false");
}
void Report::add(std::string key, long long value) {
  rows_.emplace_back(std::move(key), std::to_string(value));
}

std::string Report::structured_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : rows_) os << k << " " << v << "\n";
  return os.str();
}

std::string Report::csv() const {
  std::ostringstream head, body;
  bool first = true;
  for (const auto& [k, v] : rows_) {
    head << (first ? "" : ",") << k;
    body << (first ? "" : ",") << v;
    first = false;
  }
  return head.str() + "\n" + body.str() + "\n";
}

void Report::write(const std::string& path, const std::string& format) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open report file '" + path + "'");
  f << (format == "csv" ? csv() : structured_text());
}

} // namespace afree
