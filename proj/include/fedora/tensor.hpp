#pragma once

#include <cstddef>
#include <vector>

namespace fedora {

// Dense row-major tensor of 64-bit floats. Construction from user-supplied
// values rejects NaN/Inf; kernels that fill tensors themselves start from
// zeros and are checked at the loss level.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::size_t> shape);  // zero-filled
  DenseTensor(std::vector<std::size_t> shape, std::vector<double> values);

  static DenseTensor matrix(std::size_t rows, std::size_t cols);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * shape_[1] + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * shape_[1] + c];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t c) const {
    return values_[(a * shape_[1] + b) * shape_[2] + c];
  }
  double& operator()(std::size_t a, std::size_t b, std::size_t c) {
    return values_[(a * shape_[1] + b) * shape_[2] + c];
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool all_finite() const;
  bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// 2-D products; shapes are checked and reported with the offending dims.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
DenseTensor matmul_ta(const DenseTensor& a, const DenseTensor& b);  // a^T * b
DenseTensor matmul_tb(const DenseTensor& a, const DenseTensor& b);  // a * b^T

// Column-wise concat of matrices with equal row counts.
DenseTensor hconcat(const std::vector<const DenseTensor*>& parts);
// Columns [col_begin, col_end) as a copy.
DenseTensor hslice(const DenseTensor& m, std::size_t col_begin, std::size_t col_end);

double squared_l2(const DenseTensor& t);

}  // namespace fedora
