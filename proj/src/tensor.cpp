#include "fedora/tensor.hpp"

#include <cmath>
#include <string>

#include "fedora/errors.hpp"

namespace fedora {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(shape_product(shape_), 0.0) {}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_product(shape_) != values_.size()) {
    throw DimensionError("tensor: shape product " + std::to_string(shape_product(shape_)) +
                         " does not match value count " + std::to_string(values_.size()));
  }
  if (!all_finite()) {
    throw ValidationError("tensor: non-finite value rejected at construction");
  }
}

DenseTensor DenseTensor::matrix(std::size_t rows, std::size_t cols) {
  return DenseTensor({rows, cols});
}

std::size_t DenseTensor::dim(std::size_t i) const {
  if (i >= shape_.size()) {
    throw DimensionError("tensor: dim " + std::to_string(i) + " out of rank " +
                         std::to_string(shape_.size()));
  }
  return shape_[i];
}

bool DenseTensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

void require_matrix(const DenseTensor& t, const char* who) {
  if (t.ndim() != 2) {
    throw DimensionError(std::string(who) + ": expected a matrix, got rank " +
                         std::to_string(t.ndim()));
  }
}

}  // namespace

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  DenseTensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
  }
  return out;
}

DenseTensor matmul_ta(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul_ta");
  require_matrix(b, "matmul_ta");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_ta: inner dims " + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()));
  }
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  DenseTensor out({m, n});
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
  }
  return out;
}

DenseTensor matmul_tb(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul_tb");
  require_matrix(b, "matmul_tb");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_tb: inner dims " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  DenseTensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(j, p);
      out(i, j) = acc;
    }
  }
  return out;
}

DenseTensor hconcat(const std::vector<const DenseTensor*>& parts) {
  if (parts.empty()) throw DimensionError("hconcat: no inputs");
  const std::size_t rows = parts[0]->rows();
  std::size_t cols = 0;
  for (const DenseTensor* p : parts) {
    require_matrix(*p, "hconcat");
    if (p->rows() != rows) {
      throw DimensionError("hconcat: row counts " + std::to_string(rows) + " vs " +
                           std::to_string(p->rows()));
    }
    cols += p->cols();
  }
  DenseTensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t off = 0;
    for (const DenseTensor* p : parts) {
      for (std::size_t j = 0; j < p->cols(); ++j) out(i, off + j) = (*p)(i, j);
      off += p->cols();
    }
  }
  return out;
}

DenseTensor hslice(const DenseTensor& m, std::size_t col_begin, std::size_t col_end) {
  require_matrix(m, "hslice");
  if (col_begin > col_end || col_end > m.cols()) {
    throw DimensionError("hslice: range [" + std::to_string(col_begin) + ", " +
                         std::to_string(col_end) + ") out of " + std::to_string(m.cols()) +
                         " columns");
  }
  DenseTensor out({m.rows(), col_end - col_begin});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = col_begin; j < col_end; ++j) out(i, j - col_begin) = m(i, j);
  }
  return out;
}

double squared_l2(const DenseTensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v * v;
  return acc;
}

}  // namespace fedora
