#include "csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace eqcausal {

namespace fs = std::filesystem;

IoTablePaths IoTablePaths::in_directory(const fs::path& dir) {
  return {dir / "A.csv", dir / "R.csv", dir / "y.csv"};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct CsvFile {
  std::string name;
  std::vector<std::vector<std::string>> rows;  // rows[0] is the header
};

CsvFile read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  CsvFile f;
  f.name = path.filename().string();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (f.rows.empty() && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    f.rows.push_back(split_csv_line(line));
  }
  // trailing blank lines are not rows
  while (!f.rows.empty() && f.rows.back().size() == 1 && f.rows.back()[0].empty()) f.rows.pop_back();
  if (f.rows.empty()) throw Error(ErrorCode::ParseError, f.name + ":1:1: empty file");
  return f;
}

double parse_cell(const CsvFile& f, std::size_t row, std::size_t col) {
  std::string s = f.rows[row][col];
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError, f.name + ":" + std::to_string(row + 1) + ":" +
                                           std::to_string(col + 1) + ": cannot parse '" +
                                           f.rows[row][col] + "' as a number");
  }
  return v;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

}  // namespace

IoTable load_iotable_csv(const IoTablePaths& paths, std::vector<std::string>* warnings) {
  const CsvFile fa = read_csv(paths.A);
  const CsvFile fr = read_csv(paths.R);
  const CsvFile fy = read_csv(paths.y);

  IoTable t;
  t.sectors = fa.rows[0];
  const std::size_t d = t.sectors.size();
  if (fa.rows.size() - 1 != d) {
    throw Error(ErrorCode::DimensionMismatch, fa.name + ": " + std::to_string(d) +
                                                  " sectors in the header but " +
                                                  std::to_string(fa.rows.size() - 1) + " rows");
  }
  t.A.resize(d, d);
  for (std::size_t r = 1; r <= d; ++r) {
    if (fa.rows[r].size() != d) {
      throw Error(ErrorCode::DimensionMismatch, fa.name + ":" + std::to_string(r + 1) + ": " +
                                                    std::to_string(fa.rows[r].size()) +
                                                    " fields, expected " + std::to_string(d));
    }
    for (std::size_t c = 0; c < d; ++c) t.A(r - 1, c) = parse_cell(fa, r, c);
  }

  if (fr.rows[0].size() != d + 1) {
    throw Error(ErrorCode::DimensionMismatch, fr.name + ": header names " +
                                                  std::to_string(fr.rows[0].size() - 1) +
                                                  " sectors, A.csv has " + std::to_string(d));
  }
  for (std::size_t c = 0; c < d; ++c) {
    if (fr.rows[0][c + 1] != t.sectors[c]) {
      throw Error(ErrorCode::DimensionMismatch, fr.name + ":1:" + std::to_string(c + 2) +
                                                    ": sector '" + fr.rows[0][c + 1] +
                                                    "' does not match A.csv's '" + t.sectors[c] +
                                                    "'");
    }
  }
  t.R.resize(static_cast<Eigen::Index>(fr.rows.size() - 1), static_cast<Eigen::Index>(d));
  for (std::size_t r = 1; r < fr.rows.size(); ++r) {
    if (fr.rows[r].size() != d + 1) {
      throw Error(ErrorCode::DimensionMismatch, fr.name + ":" + std::to_string(r + 1) + ": " +
                                                    std::to_string(fr.rows[r].size()) +
                                                    " fields, expected " + std::to_string(d + 1));
    }
    t.impacts.push_back(fr.rows[r][0]);
    for (std::size_t c = 0; c < d; ++c) t.R(r - 1, c) = parse_cell(fr, r, c + 1);
  }

  if (fy.rows.size() - 1 != d) {
    throw Error(ErrorCode::DimensionMismatch, fy.name + ": " + std::to_string(fy.rows.size() - 1) +
                                                  " demand rows, A.csv has " + std::to_string(d) +
                                                  " sectors");
  }
  t.y.resize(d);
  for (std::size_t r = 1; r <= d; ++r) {
    if (fy.rows[r].size() != 1) {
      throw Error(ErrorCode::DimensionMismatch, fy.name + ":" + std::to_string(r + 1) +
                                                    ": expected a single value");
    }
    t.y[r - 1] = parse_cell(fy, r, 0);
  }

  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      if (t.A(r, c) < 0.0) {
        throw Error(ErrorCode::NegativeEntry,
                    fa.name + ":" + std::to_string(r + 2) + ":" + std::to_string(c + 1) +
                        ": A[" + t.sectors[r] + "][" + t.sectors[c] + "] = " +
                        format_double(t.A(r, c)));
      }
    }
  }
  for (Eigen::Index r = 0; r < t.R.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      if (t.R(r, c) < 0.0) {
        throw Error(ErrorCode::NegativeEntry,
                    fr.name + ":" + std::to_string(r + 2) + ":" + std::to_string(c + 2) + ": R[" +
                        t.impacts[r] + "][" + t.sectors[c] + "] = " + format_double(t.R(r, c)));
      }
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    if (t.y[r] < 0.0) {
      throw Error(ErrorCode::NegativeEntry, fy.name + ":" + std::to_string(r + 2) + ":1: y[" +
                                                t.sectors[r] + "] = " + format_double(t.y[r]));
    }
  }
  t.validate();
  if (warnings && !hawkins_simon_check(t.A)) {
    warnings->push_back("A fails the Hawkins-Simon condition; forward iteration may diverge");
  }
  return t;
}

void save_iotable_csv(const IoTable& table, const IoTablePaths& paths) {
  table.validate();
  const int d = table.dim();
  {
    CsvWriter w(table.sectors);
    for (int r = 0; r < d; ++r) {
      std::vector<std::string> row;
      for (int c = 0; c < d; ++c) row.push_back(format_double(table.A(r, c)));
      w.row(row);
    }
    write_file(paths.A, w.str());
  }
  {
    std::vector<std::string> header = {"impact"};
    header.insert(header.end(), table.sectors.begin(), table.sectors.end());
    CsvWriter w(header);
    for (Eigen::Index r = 0; r < table.R.rows(); ++r) {
      std::vector<std::string> row = {table.impacts[r]};
      for (int c = 0; c < d; ++c) row.push_back(format_double(table.R(r, c)));
      w.row(row);
    }
    write_file(paths.R, w.str());
  }
  {
    CsvWriter w({"y"});
    for (int r = 0; r < d; ++r) w.row({format_double(table.y[r])});
    write_file(paths.y, w.str());
  }
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) {
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) {
    throw Error(ErrorCode::DimensionMismatch, "CSV row has " + std::to_string(fields.size()) +
                                                  " fields, header has " + std::to_string(width_));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ += ',';
    out_ += quote(fields[i]);
  }
  out_ += '\n';
}

}  // namespace eqcausal
