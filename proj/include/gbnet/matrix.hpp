#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "gbnet/error.hpp"

namespace gbnet {

/// Dense row-major matrix of 64-bit floats. The carrier for feature
/// batches and layer activations; just the operations the MLP needs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: data length does not match rows*cols");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// Copies a subset of rows, in the given order.
  Matrix take_rows(const std::vector<std::size_t>& idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* src = row_ptr(idx[i]);
      double* dst = out.row_ptr(i);
      for (std::size_t c = 0; c < cols_; ++c) dst[c] = src[c];
    }
    return out;
  }

  /// [a ‖ b] column-wise concatenation.
  static Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
      throw ShapeError("hcat: row counts differ");
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      double* dst = out.row_ptr(r);
      const double* pa = a.row_ptr(r);
      const double* pb = b.row_ptr(r);
      for (std::size_t c = 0; c < a.cols(); ++c) dst[c] = pa[c];
      for (std::size_t c = 0; c < b.cols(); ++c) dst[a.cols() + c] = pb[c];
    }
    return out;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace gbnet
