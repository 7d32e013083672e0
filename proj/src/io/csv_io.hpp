#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "modelzoo.hpp"

namespace eqcausal {

/// A.csv: header of sector names, then d rows of d values.
/// R.csv: header "impact" followed by sector names, then one row per impact
///        starting with its name.
/// y.csv: header "y", then d rows with one value each.
struct IoTablePaths {
  std::filesystem::path A;
  std::filesystem::path R;
  std::filesystem::path y;

  /// dir/A.csv, dir/R.csv, dir/y.csv
  static IoTablePaths in_directory(const std::filesystem::path& dir);
};

/// Throws ParseError (file:line:column), NegativeEntry naming the cell,
/// DimensionMismatch or IoError. Hawkins-Simon failures go to `warnings`.
IoTable load_iotable_csv(const IoTablePaths& paths, std::vector<std::string>* warnings = nullptr);
/// Values are written in shortest round-trip form, so a reload is bit-exact.
void save_iotable_csv(const IoTable& table, const IoTablePaths& paths);

/// Comma-separated fields of one line. Quoted fields may contain commas and
/// doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line);
/// Shortest text that parses back to the same double.
std::string format_double(double v);

/// Small CSV writer for result tables.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& fields);
  std::string str() const { return out_; }

 private:
  std::size_t width_;
  std::string out_;
};

}  // namespace eqcausal
