#include "dice/matrix.hpp"

#include <cmath>
#include <string>

#include "dice/errors.hpp"

namespace dice {

FeatureMatrix::FeatureMatrix(size_t rows, size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows_ < 1 || cols_ < 1) throw DataError("feature matrix must have rows >= 1 and cols >= 1");
  if (data_.size() != rows_ * cols_)
    throw DataError("feature matrix data length " + std::to_string(data_.size()) +
                    " != rows*cols " + std::to_string(rows_ * cols_));
  for (size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k]))
      throw DataError("non-finite entry at row " + std::to_string(k / cols_) + ", col " +
                      std::to_string(k % cols_));
  }
}

FeatureMatrix FeatureMatrix::from_double(size_t rows, size_t cols, const std::vector<double>& data) {
  std::vector<float> f(data.begin(), data.end());
  return FeatureMatrix(rows, cols, std::move(f));
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<size_t>& idx) const {
  std::vector<float> out;
  out.reserve(idx.size() * cols_);
  for (size_t i : idx) {
    if (i >= rows_) throw DataError("row index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return FeatureMatrix(idx.size(), cols_, std::move(out));
}

FeatureMatrix FeatureMatrix::hcat(const FeatureMatrix& other) const {
  if (other.rows_ != rows_) throw DataError("hcat: row count mismatch");
  std::vector<float> out;
  out.reserve(rows_ * (cols_ + other.cols_));
  for (size_t i = 0; i < rows_; ++i) {
    auto a = row(i), b = other.row(i);
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
  }
  return FeatureMatrix(rows_, cols_ + other.cols_, std::move(out));
}

}  // namespace dice
