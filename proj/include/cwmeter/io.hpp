#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cwmeter {

// FNV-1a 64-bit content hash, reported as 16 hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Shortest round-trip decimal formatting (to_chars).
std::string format_double(double v);

// CSV payload builder: comma separator, '.' decimal point, LF line endings,
// mandatory header row.
class CsvBuilder {
 public:
  explicit CsvBuilder(const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  const std::string& payload() const { return payload_; }

 private:
  std::size_t columns_;
  std::string payload_;
};

// Writes a CSV artifact: '#'-prefixed comment lines carrying the resolved
// config (single-line JSON) and the content hash of the payload, then the
// payload itself.
void write_csv_artifact(const std::string& path, const std::string& config_json_line,
                        const std::string& payload);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace cwmeter
