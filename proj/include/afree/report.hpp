#ifndef AFREE_REPORT_HPP
#define AFREE_REPORT_HPP

#include <string>
#include <utility>
#include <vector>

namespace afree {

/// Machine-readable run reports. Values are rounded to 10 significant digits
/// (below every tolerance in the suite, above FFT noise).
class Report {
public:
  void add(std::string key, double value);
  void add(std::string key, const std::string& value);
  void add(std::string key, const char* value);
  void add(std::string key, bool value);
  void add(std::string key, long long value);

  std::string structured_text() const;  // "key value" lines
  std::string csv() const;              // header row + single value row

  void write(const std::string& path, const std::string& format) const;
  const std::vector<std::pair<std::string, std::string>>& rows() const { return rows_; }

private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

std::string format_sig(double v, int digits = 10);

} // namespace afree

#endif
