#include "saeaudit/matrix.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>

#include "saeaudit/errors.hpp"

namespace saeaudit {

namespace {

std::atomic<int> g_matmul_threads{1};

void require_inner(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": inner dimensions " + std::to_string(a) +
                     " and " + std::to_string(b) + " do not match");
  }
}

// Accumulates rows [r0, r1) of a*b into c. Per output element the inner
// index k runs ascending, independent of how rows are partitioned.
void matmul_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t r0, std::size_t r1) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  for (std::size_t i = r0; i < r1; ++i) {
    double* crow = c.row_ptr(i);
    const double* arow = a.row_ptr(i);
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Matrix::fill(double value) {
  for (double& v : data_) v = value;
}

bool operator==(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  if (a.data_.empty()) return true;
  return std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

void set_matmul_threads(int n) { g_matmul_threads.store(n < 1 ? 1 : n); }
int matmul_threads() { return g_matmul_threads.load(); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_inner(a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  const int want = matmul_threads();
  const std::size_t work = a.rows() * a.cols() * b.cols();
  if (want > 1 && a.rows() >= 2 && work >= (1u << 21)) {
    const std::size_t nthreads = std::min<std::size_t>(want, a.rows());
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    const std::size_t chunk = (a.rows() + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
      const std::size_t r0 = t * chunk;
      const std::size_t r1 = std::min(a.rows(), r0 + chunk);
      if (r0 >= r1) break;
      pool.emplace_back(matmul_rows, std::cref(a), std::cref(b), std::ref(c), r0, r1);
    }
    for (auto& th : pool) th.join();
  } else {
    matmul_rows(a, b, c, 0, a.rows());
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require_inner(a.rows(), b.rows(), "matmul_tn");
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row_ptr(k);
    const double* brow = b.row_ptr(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      double* crow = c.row_ptr(i);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require_inner(a.cols(), b.cols(), "matmul_nt");
  Matrix c(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row_ptr(j);
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += arow[k] * brow[k];
      crow[j] = s;
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add_inplace: shape mismatch");
  double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

void scale_inplace(Matrix& a, double s) {
  for (double& v : a.data()) v *= s;
}

Matrix column_sums(const Matrix& a) {
  Matrix s(1, a.cols());
  double* out = s.row_ptr(0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += row[j];
  }
  return s;
}

}  // namespace saeaudit
