#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lsm/error.hpp"

namespace lsm {

// Small dense column-major matrix for K x K systems and 2 x 2 blocks.
class SmallMatrix {
public:
  SmallMatrix() = default;
  SmallMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}
  SmallMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (entries_.size() != rows * cols) {
      throw InvalidArgument("SmallMatrix entries length does not match rows*cols");
    }
  }

  static SmallMatrix identity(std::size_t n) {
    SmallMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return entries_[c * rows_ + r]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[c * rows_ + r]; }
  std::span<const double> entries() const noexcept { return entries_; }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < rows_ && i < cols_; ++i) t += (*this)(i, i);
    return t;
  }

  std::vector<double> operator*(std::span<const double> v) const {
    std::vector<double> out(rows_, 0.0);
    for (std::size_t c = 0; c < cols_; ++c) {
      for (std::size_t r = 0; r < rows_; ++r) out[r] += (*this)(r, c) * v[c];
    }
    return out;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

inline constexpr double kPivotTolerance = 1e-12;
inline constexpr double kSingularTolerance = 1e-12;

// Lower-triangular Cholesky factor L with a = L L^T. Only the lower triangle of a is read.
inline SmallMatrix cholesky_factor(const SmallMatrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("cholesky requires a square matrix");
  const std::size_t n = a.rows();
  SmallMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > kPivotTolerance)) throw NotPositiveDefinite(j, diag);
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

inline std::vector<double> cholesky_substitute(const SmallMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  if (b.size() != n) throw InvalidArgument("cholesky_solve: rhs length mismatch");
  std::vector<double> z(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = z[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * z[k];
    z[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = z[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * z[k];
    z[ii] = s / l(ii, ii);
  }
  return z;
}

// Solves a z = b for symmetric positive-definite a.
inline std::vector<double> cholesky_solve(const SmallMatrix& a, std::span<const double> b) {
  return cholesky_substitute(cholesky_factor(a), b);
}

using Vec2 = std::array<double, 2>;

// 2 x 2 matrices are passed as {{m00, m01}, {m10, m11}} (row-major literal).
using Mat2 = std::array<std::array<double, 2>, 2>;

inline double det2(const Mat2& m) { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }

inline double det2(const SmallMatrix& m) {
  if (m.rows() != 2 || m.cols() != 2) throw InvalidArgument("det2 requires a 2x2 matrix");
  return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
}

// Cramer's rule: column j of h replaced by s.
inline Vec2 cramer2(const Mat2& h, const Vec2& s) {
  const double det = det2(h);
  if (!(std::abs(det) > kSingularTolerance)) {
    throw SingularBlock("2x2 block is singular: det = " + std::to_string(det));
  }
  const double det_x = s[0] * h[1][1] - h[0][1] * s[1];
  const double det_y = h[0][0] * s[1] - s[0] * h[1][0];
  return {det_x / det, det_y / det};
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
inline std::vector<double> symmetric_eigenvalues(const SmallMatrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("symmetric_eigenvalues requires a square matrix");
  const std::size_t n = a.rows();
  SmallMatrix m = a;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        total += m(i, j) * m(i, j);
        if (i != j) off += m(i, j) * m(i, j);
      }
    }
    if (off <= 1e-30 * total || off == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = m(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace lsm
