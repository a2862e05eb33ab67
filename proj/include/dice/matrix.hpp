#pragma once
#include <cstddef>
#include <span>
#include <vector>

namespace dice {

// Dense row-major float matrix, immutable once built. Entries are finite.
class FeatureMatrix {
public:
  FeatureMatrix() = default;
  FeatureMatrix(size_t rows, size_t cols, std::vector<float> data);
  // from doubles, narrowed to float storage
  static FeatureMatrix from_double(size_t rows, size_t cols, const std::vector<double>& data);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }
  const std::vector<float>& data() const { return data_; }
  float operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }
  std::span<const float> row(size_t i) const { return {data_.data() + i * cols_, cols_}; }

  FeatureMatrix select_rows(const std::vector<size_t>& idx) const;
  // appends extra columns on the right
  FeatureMatrix hcat(const FeatureMatrix& other) const;

private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<float> data_;
};

}  // namespace dice
