#include "dice/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dice/errors.hpp"

namespace dice {

static_assert(std::endian::native == std::endian::little, "little-endian host expected");

namespace {

template <class T>
void put(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

template <class T>
T get(const std::string& s, size_t& off) {
  if (off + sizeof(T) > s.size()) throw DataError("truncated binary file");
  T v;
  std::memcpy(&v, s.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void write_dcef(const std::string& path, const FeatureMatrix& m) {
  std::string s;
  s.reserve(24 + m.data().size() * 4);
  s.append("DCEF", 4);
  put<uint32_t>(s, 1);
  put<uint64_t>(s, m.rows());
  put<uint64_t>(s, m.cols());
  s.append(reinterpret_cast<const char*>(m.data().data()), m.data().size() * sizeof(float));
  write_file_atomic(path, s);
}

FeatureMatrix read_dcef(const std::string& path) {
  std::string s = read_text_file(path);
  if (s.size() < 4 || s.compare(0, 4, "DCEF") != 0) throw DataError(path + ": bad magic, expected DCEF");
  size_t off = 4;
  auto ver = get<uint32_t>(s, off);
  if (ver != 1) throw DataError(path + ": unsupported DCEF version " + std::to_string(ver));
  auto rows = get<uint64_t>(s, off);
  auto cols = get<uint64_t>(s, off);
  if (rows == 0 || cols == 0) throw DataError(path + ": empty matrix");
  if (s.size() - off != rows * cols * sizeof(float))
    throw DataError(path + ": payload size does not match header");
  std::vector<float> data(rows * cols);
  std::memcpy(data.data(), s.data() + off, data.size() * sizeof(float));
  return FeatureMatrix(rows, cols, std::move(data));
}

void write_csv_matrix(const std::string& path, const FeatureMatrix& m, const std::string& prefix) {
  std::string s;
  for (size_t j = 0; j < m.cols(); ++j) {
    if (j) s += ',';
    s += prefix + std::to_string(j);
  }
  s += '\n';
  char buf[32];
  for (size_t i = 0; i < m.rows(); ++i) {
    for (size_t j = 0; j < m.cols(); ++j) {
      if (j) s += ',';
      std::snprintf(buf, sizeof buf, "%.9g", m(i, j));
      s += buf;
    }
    s += '\n';
  }
  write_file_atomic(path, s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

int CsvTable::column(const std::string& name) const {
  for (size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  return -1;
}

CsvTable read_csv_table(const std::string& path) {
  std::istringstream in(read_text_file(path));
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (first) {
      t.header = f;
      first = false;
    } else {
      if (f.size() != t.header.size())
        throw DataError(path + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                        std::to_string(f.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
      t.rows.push_back(std::move(f));
    }
  }
  if (first) throw DataError(path + ": empty CSV");
  return t;
}

FeatureMatrix read_csv_matrix(const std::string& path) {
  CsvTable t = read_csv_table(path);
  size_t d = t.header.size();
  std::vector<float> data;
  data.reserve(t.rows.size() * d);
  for (size_t i = 0; i < t.rows.size(); ++i) {
    for (size_t j = 0; j < d; ++j) {
      const std::string& f = t.rows[i][j];
      char* end = nullptr;
      float v = std::strtof(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size())
        throw DataError(path + ": non-numeric value '" + f + "' at row " + std::to_string(i + 1));
      data.push_back(v);
    }
  }
  if (t.rows.empty()) throw DataError(path + ": no data rows");
  return FeatureMatrix(t.rows.size(), d, std::move(data));
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "DCEF", 4) == 0) return read_dcef(path);
  return read_csv_matrix(path);
}

}  // namespace dice
