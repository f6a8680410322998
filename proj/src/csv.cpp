#include "cavloss/csv.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cavloss {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trimmed(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv_text(const std::string& text, const std::string& origin) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trimmed(line).empty()) continue;
    auto fields = split_fields(line);
    for (auto& f : fields) f = trimmed(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size())
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": expected " +
                                    std::to_string(t.header.size()) +
                                    " fields, got " +
                                    std::to_string(fields.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty())
    throw std::invalid_argument(origin + ": empty file");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return read_csv_text(ss.str(), path);
}

double csv_num(const CsvTable& t, std::size_t row, int col,
               const std::string& origin) {
  if (col < 0 || static_cast<std::size_t>(col) >= t.header.size())
    throw std::invalid_argument(origin + ": missing column index " +
                                std::to_string(col));
  const std::string& s = t.rows[row][static_cast<std::size_t>(col)];
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument(origin + ": row " + std::to_string(row + 2) +
                                ", column '" +
                                t.header[static_cast<std::size_t>(col)] +
                                "': not a number: '" + s + "'");
  return v;
}

std::string fmt_double(double v) {
  char buf[40];
  // %.17g round-trips doubles exactly and is locale independent here.
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += fields[i];
  }
  out.push_back('\n');
  return out;
}

}  // namespace cavloss
