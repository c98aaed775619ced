#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace saeaudit {

// Dense row-major matrix of 64-bit reals. The workhorse container for
// activations, weights and codes.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
  std::span<double> row(std::size_t r) { return {row_ptr(r), cols_}; }
  std::span<const double> row(std::size_t r) const { return {row_ptr(r), cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const;
  void fill(double value);

  // Bitwise equality (shape plus the exact bit pattern of every entry).
  friend bool operator==(const Matrix& a, const Matrix& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// c = a * b with deterministic per-element summation order (inner index
// ascending). Throws ShapeError on a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

// c = transpose(a) * b, same summation order guarantee.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// c = a * transpose(b).
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix identity(std::size_t n);

void add_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double s);

// Sum over rows, result is 1 x cols.
Matrix column_sums(const Matrix& a);

// Optional data-parallel matmul. Work is split by output row, so results
// are bitwise identical for any thread count. 1 disables threading.
void set_matmul_threads(int n);
int matmul_threads();

}  // namespace saeaudit
