#ifndef MEDREP_CSV_HPP_
#define MEDREP_CSV_HPP_

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace medrep::csv {

// "%.12g" when that reads back bit-exact, otherwise "%.17g".
std::string fmt(double v);
std::string fmt(std::optional<double> v);  // missing -> empty field

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::vector<std::string>& header);
  Writer& operator<<(const std::string& field);
  Writer& operator<<(const char* field) { return *this << std::string(field); }
  Writer& operator<<(double v) { return *this << fmt(v); }
  Writer& operator<<(std::optional<double> v) { return *this << fmt(v); }
  Writer& operator<<(long long v) { return *this << std::to_string(v); }
  Writer& operator<<(int v) { return *this << std::to_string(v); }
  Writer& operator<<(std::size_t v) { return *this << std::to_string(v); }
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
  std::filesystem::path path_;
};

class Table {
 public:
  static Table read(const std::filesystem::path& path);

  std::size_t rows() const { return cells_.size(); }
  bool has(const std::string& column) const { return index_.count(column) != 0; }
  // Throws IoError when the column is absent.
  std::size_t column(const std::string& name) const;
  const std::string& at(std::size_t row, const std::string& col) const { return cells_[row][column(col)]; }
  double number(std::size_t row, const std::string& col) const;
  std::optional<double> maybe_number(std::size_t row, const std::string& col) const;
  long long integer(std::size_t row, const std::string& col) const;

 private:
  std::filesystem::path path_;
  std::vector<std::string> header_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> cells_;
};

}  // namespace medrep::csv

#endif  // MEDREP_CSV_HPP_
