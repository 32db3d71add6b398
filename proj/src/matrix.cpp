#include "vimp/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vimp/error.hpp"

namespace vimp {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionMismatch("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> Matrix::column(std::size_t j) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

void Matrix::set_column(std::size_t j, std::span<const double> values) {
  if (values.size() != rows_) throw DimensionMismatch("set_column: length mismatch");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matrix product: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

namespace {

template <typename Op>
Matrix elementwise(const Matrix& a, const Matrix& b, Op op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch("elementwise op: shapes differ");
  Matrix c(a.rows(), a.cols());
  auto ad = a.data();
  auto bd = b.data();
  auto cd = c.data();
  for (std::size_t k = 0; k < cd.size(); ++k) cd[k] = op(ad[k], bd[k]);
  return c;
}

}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, std::plus<>{});
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, std::minus<>{});
}

Matrix operator*(double c, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) v *= c;
  return out;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch("max_abs_diff: shapes differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k)
    worst = std::max(worst, std::abs(a.data()[k] - b.data()[k]));
  return worst;
}

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() == 0 || m_.rows() != m_.cols())
    throw DimensionMismatch("SymMatrix requires a non-empty square matrix");
  for (std::size_t i = 0; i < m_.rows(); ++i)
    for (std::size_t j = i + 1; j < m_.cols(); ++j)
      if (m_(i, j) != m_(j, i))
        throw ValidationError("SymMatrix: entries (" + std::to_string(i) + "," +
                              std::to_string(j) + ") not symmetric");
}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("symmetrized: matrix not square");
  Matrix s = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  return SymMatrix(std::move(s));
}

CholFactor cholesky(const SymMatrix& m) {
  const std::size_t n = m.dim();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = m(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > kPivotTolerance))
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(pivot) + " at index " +
                                std::to_string(j));
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = m(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / d;
    }
  }
  return CholFactor{std::move(l)};
}

Matrix solve_with(const CholFactor& f, const Matrix& rhs) {
  const Matrix& l = f.lower;
  const std::size_t n = l.rows();
  if (rhs.rows() != n) throw DimensionMismatch("solve_spd: rhs row count differs from matrix dim");
  Matrix x = rhs;
  for (std::size_t c = 0; c < rhs.cols(); ++c) {
    // forward: L y = b
    for (std::size_t i = 0; i < n; ++i) {
      double v = x(i, c);
      for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * x(k, c);
      x(i, c) = v / l(i, i);
    }
    // backward: L^T x = y
    for (std::size_t ii = n; ii-- > 0;) {
      double v = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x(k, c);
      x(ii, c) = v / l(ii, ii);
    }
  }
  return x;
}

Matrix solve_spd(const SymMatrix& m, const Matrix& rhs) {
  return solve_with(cholesky(m), rhs);
}

EigenDecomposition symmetric_eigen(const SymMatrix& m, int max_sweeps) {
  const std::size_t n = m.dim();
  Matrix a = m.matrix();
  Matrix v = Matrix::identity(n);

  auto off_diagonal = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return s;
  };
  const double scale = frobenius_norm(a);

  bool converged = n == 1;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    const double off = off_diagonal();
    if (off == 0.0 || std::sqrt(off) <= 1e-15 * scale) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    const double off = off_diagonal();
    if (!(off == 0.0 || std::sqrt(off) <= 1e-15 * scale))
      throw NoConvergence("symmetric_eigen: Jacobi sweeps exhausted");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

double min_eigenvalue(const SymMatrix& m) { return symmetric_eigen(m).values.front(); }

}  // namespace vimp
