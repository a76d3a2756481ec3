#include "duostream/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "duostream/errors.hpp"

namespace duostream {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw MissingInputError("csv: cannot open " + path);
  file_ = f;
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) std::fputc(',', f);
    std::fwrite(header[i].data(), 1, header[i].size(), f);
  }
  std::fputc('\n', f);
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(static_cast<std::FILE*>(file_));
}

void CsvWriter::sep() {
  if (row_open_) std::fputc(',', static_cast<std::FILE*>(file_));
  row_open_ = true;
}

CsvWriter& CsvWriter::field(const std::string& v) {
  sep();
  std::fwrite(v.data(), 1, v.size(), static_cast<std::FILE*>(file_));
  return *this;
}

CsvWriter& CsvWriter::field(int64_t v) {
  sep();
  std::fprintf(static_cast<std::FILE*>(file_), "%lld", static_cast<long long>(v));
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

void CsvWriter::end_row() {
  std::fputc('\n', static_cast<std::FILE*>(file_));
  row_open_ = false;
}

void CsvWriter::flush() { std::fflush(static_cast<std::FILE*>(file_)); }

std::vector<std::vector<std::string>> csv_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("csv: cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace duostream
