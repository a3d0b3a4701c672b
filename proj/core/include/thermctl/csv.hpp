#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace thermctl {

/// Formats a double with enough digits to round-trip (shortest %.17g form
/// that parses back exactly). Keeps CSV output byte-stable across runs.
std::string format_double(double v);

/// Append-only CSV writer. The header row is written on construction.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns);

  void row(const std::vector<std::string>& cells);
  void flush();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t n_columns_;
};

/// Whole-file CSV reader for the replay and plot tooling. No quoting support;
/// none of the emitted files need it.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);  // throws MissingLogError

}  // namespace thermctl
