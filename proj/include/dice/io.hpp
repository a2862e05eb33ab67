#pragma once
#include <string>
#include <vector>

#include "dice/matrix.hpp"

namespace dice {

// "DCEF" | u32 version=1 | u64 rows | u64 cols | rows*cols LE f32
void write_dcef(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_dcef(const std::string& path);

// headered CSV, all columns numeric
void write_csv_matrix(const std::string& path, const FeatureMatrix& m,
                      const std::string& prefix = "f");
FeatureMatrix read_csv_matrix(const std::string& path);

// dispatch on magic bytes
FeatureMatrix read_features(const std::string& path);

// named numeric columns from a headered CSV
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 if absent
};
CsvTable read_csv_table(const std::string& path);
std::vector<std::string> split_csv_line(const std::string& line);

std::string read_text_file(const std::string& path);
// writes to path.tmp then renames
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace dice
