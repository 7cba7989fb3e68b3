#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace v2xmeta {

/// Shortest text that reads back to the same double.
std::string format_number(double v);

/// Header-first CSV file. Cells are written verbatim; callers keep them free
/// of commas.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  template <class... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> out;
    (out.push_back(cell(cells)), ...);
    write(out);
  }
  void write(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return format_number(v); }
  template <class Int>
    requires std::is_integral_v<Int>
  static std::string cell(Int v) {
    return std::to_string(v);
  }

  std::ofstream out_;
  std::size_t columns_;
};

/// Reads a CSV written by CsvWriter (no quoting). First row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace v2xmeta
