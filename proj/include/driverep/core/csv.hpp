#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace driverep {

// Minimal CSV with a header row. Values never contain commas or quotes in
// this project, so no escaping is implemented.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& values);
  void flush();

 private:
  std::ofstream out_;
  std::size_t n_columns_;
  std::filesystem::path path_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;
  double real(std::size_t row, const std::string& column) const;
};

CsvTable read_csv(const std::filesystem::path& path);

std::string format_real(double v);

}  // namespace driverep
