#include "medrep/csv.hpp"

#include "medrep/types.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace medrep::csv {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(std::optional<double> v) { return v ? fmt(*v) : std::string(); }

Writer::Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()), path_(path) {
  if (!out_) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

Writer& Writer::operator<<(const std::string& field) {
  if (in_row_ >= columns_) throw IoError("too many fields in row of " + path_.string());
  out_ << (in_row_ ? "," : "") << field;
  ++in_row_;
  return *this;
}

void Writer::end_row() {
  if (in_row_ != columns_) throw IoError("short row in " + path_.string());
  out_ << '\n';
  in_row_ = 0;
}

namespace {
std::vector<std::string> split(const std::string& line) {
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
}  // namespace

Table Table::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Table t;
  t.path_ = path;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV " + path.string());
  t.header_ = split(line);
  for (std::size_t i = 0; i < t.header_.size(); ++i) t.index_[t.header_[i]] = i;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto row = split(line);
    if (row.size() != t.header_.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header_.size()) +
                    " fields, got " + std::to_string(row.size()));
    t.cells_.push_back(std::move(row));
  }
  return t;
}

std::size_t Table::column(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IoError(path_.string() + ": missing column '" + name + "'");
  return it->second;
}

double Table::number(std::size_t row, const std::string& col) const {
  const std::string& s = at(row, col);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw IoError(path_.string() + ": row " + std::to_string(row + 2) + ": '" + col + "' is not a number: '" + s + "'");
  return v;
}

std::optional<double> Table::maybe_number(std::size_t row, const std::string& col) const {
  if (at(row, col).empty()) return std::nullopt;
  return number(row, col);
}

long long Table::integer(std::size_t row, const std::string& col) const {
  const double v = number(row, col);
  if (v != std::floor(v))
    throw IoError(path_.string() + ": row " + std::to_string(row + 2) + ": '" + col + "' is not an integer");
  return static_cast<long long>(v);
}

}  // namespace medrep::csv
