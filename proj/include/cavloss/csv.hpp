#pragma once

#include <string>
#include <vector>

namespace cavloss {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index for `name`, or -1.
  int column(const std::string& name) const;
};

// Strict reader: rectangular, comma separated, first line is the header.
// Throws std::invalid_argument naming file and line on malformed input.
CsvTable read_csv_file(const std::string& path);
CsvTable read_csv_text(const std::string& text, const std::string& origin);

// Field -> double with file/line/column context in the error message.
double csv_num(const CsvTable& t, std::size_t row, int col,
               const std::string& origin);

// Round-trip-exact formatting; used everywhere doubles are serialized so
// reruns with the same seed produce byte-identical artifacts.
std::string fmt_double(double v);

std::string join_csv_row(const std::vector<std::string>& fields);

}  // namespace cavloss
