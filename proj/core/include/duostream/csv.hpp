#pragma once

#include <string>
#include <vector>

namespace duostream {

// Minimal CSV writing with deterministic float formatting ("%.9g"), so a
// rerun with the same numbers is byte-identical.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  CsvWriter& field(const std::string& v);
  CsvWriter& field(int64_t v);
  CsvWriter& field(double v);
  void end_row();
  void flush();

 private:
  void sep();
  void* file_ = nullptr;
  bool row_open_ = false;
};

std::string format_double(double v);

// Tiny reader: whole file into rows of string cells (no quoting/escapes; the
// project's own files never need them).
std::vector<std::vector<std::string>> csv_read(const std::string& path);

}  // namespace duostream
