#pragma once

// Small dense linear algebra. Every matrix in this project is at most a few
// dozen columns wide, so storage is a plain row-major std::vector.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace vimp {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double> column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> values);

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double c, const Matrix& a);

double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Square matrix whose symmetry is exact: entries(i, j) == entries(j, i)
// bit-for-bit. Construction from an arbitrary Matrix checks this.
class SymMatrix {
 public:
  explicit SymMatrix(Matrix m);
  SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
      : SymMatrix(Matrix(rows)) {}

  static SymMatrix identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }
  // Averages m and its transpose; for products that are symmetric only up to
  // rounding.
  static SymMatrix symmetrized(const Matrix& m);

  std::size_t dim() const { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

struct CholFactor {
  Matrix lower;  // lower triangular, strictly positive diagonal

  Matrix reconstruct() const { return lower * lower.transpose(); }
};

// Pivots at or below this value are treated as non-positive.
inline constexpr double kPivotTolerance = 1e-12;

// Throws NotPositiveDefinite when a pivot <= kPivotTolerance shows up.
CholFactor cholesky(const SymMatrix& m);

// Solves m * X = rhs via cholesky.
Matrix solve_spd(const SymMatrix& m, const Matrix& rhs);
Matrix solve_with(const CholFactor& f, const Matrix& rhs);

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k pairs with values[k]
};

// Cyclic Jacobi. Throws NoConvergence after max_sweeps sweeps.
EigenDecomposition symmetric_eigen(const SymMatrix& m, int max_sweeps = 100);
double min_eigenvalue(const SymMatrix& m);

}  // namespace vimp
