#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "lsm/data_terms.hpp"
#include "lsm/error.hpp"
#include "lsm/grid.hpp"
#include "lsm/linalg.hpp"

namespace lsm {

enum class Orthonormalize { yes, no };

// Dense N x K basis, stored column-major (column j is contiguous).
class SubspaceBasis {
public:
  SubspaceBasis() = default;

  // Validates linear independence (smallest Gram eigenvalue >= 1e-10 x largest)
  // and, by default, orthonormalizes with two passes of modified Gram-Schmidt.
  SubspaceBasis(std::size_t n, std::size_t k, std::vector<double> columns, Orthonormalize mode = Orthonormalize::yes)
      : n_(n), k_(k), v_(std::move(columns)) {
    if (n == 0 || k == 0) throw InvalidArgument("basis must have n >= 1 and k >= 1");
    if (v_.size() != n * k) throw InvalidArgument("basis column data has wrong length");
    if (k > n) throw RankDeficientBasis("basis has more columns than rows");
    check_rank();
    if (mode == Orthonormalize::yes) orthonormalize();
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t k() const noexcept { return k_; }
  std::span<const double> column(std::size_t j) const { return {v_.data() + j * n_, n_}; }
  std::span<const double> data() const noexcept { return v_; }

  // V^T V
  SmallMatrix gram() const {
    SmallMatrix g(k_, k_);
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const double s = dot(column(i), column(j));
        g(i, j) = s;
        g(j, i) = s;
      }
    }
    return g;
  }

  // V^T x
  std::vector<double> transpose_times(std::span<const double> x) const {
    if (x.size() != n_) throw InvalidArgument("basis/vector dimension mismatch");
    std::vector<double> out(k_);
    for (std::size_t j = 0; j < k_; ++j) out[j] = dot(column(j), x);
    return out;
  }

  // V c
  std::vector<double> times(std::span<const double> c) const {
    if (c.size() != k_) throw InvalidArgument("coefficient vector length mismatch");
    std::vector<double> out(n_, 0.0);
    for (std::size_t j = 0; j < k_; ++j) {
      const auto col = column(j);
      for (std::size_t i = 0; i < n_; ++i) out[i] += col[i] * c[j];
    }
    return out;
  }

  static double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

private:
  void check_rank() const {
    const auto ev = symmetric_eigenvalues(gram());
    const double largest = ev.back();
    if (!(largest > 0.0) || !(ev.front() >= 1e-10 * largest)) {
      throw RankDeficientBasis("basis columns are linearly dependent (Gram eigenvalue ratio " +
                               std::to_string(largest > 0.0 ? ev.front() / largest : 0.0) + ")");
    }
  }

  void orthonormalize() {
    for (std::size_t j = 0; j < k_; ++j) {
      double* cj = v_.data() + j * n_;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < j; ++i) {
          const double* ci = v_.data() + i * n_;
          double s = 0.0;
          for (std::size_t r = 0; r < n_; ++r) s += ci[r] * cj[r];
          for (std::size_t r = 0; r < n_; ++r) cj[r] -= s * ci[r];
        }
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < n_; ++r) norm += cj[r] * cj[r];
      norm = std::sqrt(norm);
      if (!(norm > 0.0)) throw RankDeficientBasis("basis column " + std::to_string(j) + " vanished in orthonormalization");
      for (std::size_t r = 0; r < n_; ++r) cj[r] /= norm;
    }
  }

  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<double> v_;
};

struct FlowBasisPair {
  SubspaceBasis u;
  SubspaceBasis v;

  FlowBasisPair(SubspaceBasis bu, SubspaceBasis bv) : u(std::move(bu)), v(std::move(bv)) {
    if (u.n() != v.n()) throw InvalidArgument("flow basis pair has mismatched pixel counts");
  }
};

struct SolveReport {
  std::vector<double> coefficients;
  double predicted_decrease = 0.0;
  double damping_used = 0.0;
  double projection_residual_norm = 0.0;
};

struct Projection {
  std::vector<double> projection;  // P x
  std::vector<double> residual;    // r = P x - x
};

// Px via the Gram matrix; P itself (N x N) is never formed.
inline Projection project(const SubspaceBasis& basis, std::span<const double> x) {
  const auto vtx = basis.transpose_times(x);
  std::vector<double> coef;
  try {
    coef = cholesky_solve(basis.gram(), vtx);
  } catch (const NotPositiveDefinite&) {
    throw RankDeficientBasis("Gram matrix V^T V is singular");
  }
  Projection out;
  out.projection = basis.times(coef);
  out.residual.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.residual[i] = out.projection[i] - x[i];
  return out;
}

inline double norm2(std::span<const double> v) { return std::sqrt(SubspaceBasis::dot(v, v)); }

// V^T diag(h) V, formed by column-wise products with the diagonal.
inline SmallMatrix weighted_gram(const SubspaceBasis& a, std::span<const double> h, const SubspaceBasis& b) {
  SmallMatrix m(a.k(), b.k());
  std::vector<double> hb(a.n());
  for (std::size_t j = 0; j < b.k(); ++j) {
    const auto cb = b.column(j);
    for (std::size_t r = 0; r < a.n(); ++r) hb[r] = h[r] * cb[r];
    for (std::size_t i = 0; i < a.k(); ++i) m(i, j) = SubspaceBasis::dot(a.column(i), hb);
  }
  return m;
}

// 1e-6 * trace(A) / K, the default Levenberg damping for a system A.
inline double default_damping(const SmallMatrix& a, double relative = 1e-6) {
  return relative * a.trace() / static_cast<double>(a.rows());
}

namespace detail {

inline constexpr int kDampingRetries = 5;

// Solves (a + lambda I) z = rhs, escalating lambda x10 on factorization failure.
inline std::vector<double> damped_solve(const SmallMatrix& a, std::span<const double> rhs, double damping,
                                        double& damping_used) {
  if (damping < 0.0) throw InvalidArgument("damping must be non-negative");
  double lambda = damping;
  for (int attempt = 0; attempt <= kDampingRetries; ++attempt) {
    SmallMatrix m = a;
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += lambda;
    try {
      auto z = cholesky_solve(m, rhs);
      damping_used = lambda;
      return z;
    } catch (const NotPositiveDefinite&) {
      const double scale = std::max(1.0, std::abs(a.trace()) / static_cast<double>(a.rows()));
      lambda = lambda > 0.0 ? lambda * 10.0 : 1e-12 * scale;
    }
  }
  throw IndefiniteSystem("subspace system is not positive definite after damping escalation (last damping " +
                         std::to_string(lambda / 10.0) + ")");
}

// -(cᵀb + ½ cᵀAc): decrease of the quadratic model obtained by adding V c.
inline double model_decrease(const SmallMatrix& a, std::span<const double> b, std::span<const double> c) {
  const auto ac = a * c;
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * (b[i] + 0.5 * ac[i]);
  return -s;
}

inline void require_scalar(const QuadraticModel& q, const SubspaceBasis& basis) {
  if (q.d.channels() != 1 || q.h.channels() != 1) throw InvalidArgument("scalar solve requires a 1-channel model");
  if (q.d.pixels() != basis.n()) throw InvalidArgument("basis size does not match the pixel count");
}

// Coefficients minimizing the model along r + V c: c = -(V^T D V + λI)^{-1} V^T (d + D r).
inline std::vector<double> scalar_coefficients(const QuadraticModel& q, const SubspaceBasis& basis,
                                               std::span<const double> r, double damping, SolveReport& report) {
  const auto d = q.d.data();
  const auto h = q.h.data();
  std::vector<double> g(basis.n());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = d[i] + h[i] * r[i];
  const auto b = basis.transpose_times(g);
  const SmallMatrix a = weighted_gram(basis, h, basis);
  std::vector<double> rhs(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) rhs[i] = -b[i];
  auto c = damped_solve(a, rhs, damping, report.damping_used);
  report.predicted_decrease = model_decrease(a, b, c);
  report.coefficients = c;
  return c;
}

}  // namespace detail

// Value of ½ Δᵀ D Δ + dᵀ Δ for a scalar or flow model.
inline double quadratic_model_value(const QuadraticModel& q, std::span<const double> delta) {
  double s = 0.0;
  if (!q.is_flow()) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
      s += 0.5 * q.h.at_pixel(i) * delta[i] * delta[i] + q.d.at_pixel(i) * delta[i];
    }
    return s;
  }
  for (std::size_t p = 0; p < q.d.pixels(); ++p) {
    const double u = delta[2 * p], v = delta[2 * p + 1];
    s += 0.5 * (q.h.at_pixel(p, 0) * u * u + 2.0 * q.h.at_pixel(p, 1) * u * v + q.h.at_pixel(p, 2) * v * v) +
         q.d.at_pixel(p, 0) * u + q.d.at_pixel(p, 1) * v;
  }
  return s;
}

// c = -(V^T D V + λI)^{-1} V^T d
inline std::vector<double> solve_subspace(const QuadraticModel& q, const SubspaceBasis& basis, double damping) {
  detail::require_scalar(q, basis);
  SolveReport report;
  const std::vector<double> zero(basis.n(), 0.0);
  return detail::scalar_coefficients(q, basis, zero, damping, report);
}

struct SolveResult {
  GridD delta;
  SolveReport report;
};

// Projects x onto span(V) (r = (P - I) x), then solves for c along r + V c.
// The returned step Δx = r + V c puts x + Δx on the subspace.
inline SolveResult solve_projected(const QuadraticModel& q, const SubspaceBasis& basis, const GridD& x, double damping) {
  detail::require_scalar(q, basis);
  if (x.pixels() != basis.n() || x.channels() != 1) throw InvalidArgument("solution field does not match basis");
  const auto proj = project(basis, x.data());
  SolveResult out;
  const auto c = detail::scalar_coefficients(q, basis, proj.residual, damping, out.report);
  const auto vc = basis.times(c);
  out.delta = GridD(x.width(), x.height(), 1);
  std::vector<double> updated(basis.n());
  for (std::size_t i = 0; i < basis.n(); ++i) {
    out.delta.at_pixel(i) = proj.residual[i] + vc[i];
    updated[i] = x.at_pixel(i) + out.delta.at_pixel(i);
  }
  out.report.projection_residual_norm = norm2(project(basis, updated).residual);
  return out;
}

// Block system for two-component fields with independent u / v subspaces:
//   [V_uᵀH_xxV_u  V_uᵀH_xyV_v] [c_u]     [V_uᵀ(d_x + (H r)_x)]
//   [V_vᵀH_xyV_u  V_vᵀH_yyV_v] [c_v] = - [V_vᵀ(d_y + (H r)_y)]
// with r the per-component projection residual.
inline SolveResult solve_flow_subspace(const QuadraticModel& q, const FlowBasisPair& pair, const GridD& x,
                                       double damping) {
  if (!q.is_flow() || q.h.channels() != 3) throw InvalidArgument("flow solve requires a 2-channel model");
  const std::size_t n = pair.u.n();
  if (q.d.pixels() != n || x.pixels() != n || x.channels() != 2) {
    throw InvalidArgument("flow basis pair does not match the field size");
  }
  std::vector<double> xu(n), xv(n), hxx(n), hxy(n), hyy(n);
  for (std::size_t p = 0; p < n; ++p) {
    xu[p] = x.at_pixel(p, 0);
    xv[p] = x.at_pixel(p, 1);
    hxx[p] = q.h.at_pixel(p, 0);
    hxy[p] = q.h.at_pixel(p, 1);
    hyy[p] = q.h.at_pixel(p, 2);
  }
  const auto pu = project(pair.u, xu);
  const auto pv = project(pair.v, xv);
  const auto& ru = pu.residual;
  const auto& rv = pv.residual;

  std::vector<double> gu(n), gv(n);
  for (std::size_t p = 0; p < n; ++p) {
    gu[p] = q.d.at_pixel(p, 0) + hxx[p] * ru[p] + hxy[p] * rv[p];
    gv[p] = q.d.at_pixel(p, 1) + hxy[p] * ru[p] + hyy[p] * rv[p];
  }
  const std::size_t ku = pair.u.k(), kv = pair.v.k(), k = ku + kv;
  const auto bu = pair.u.transpose_times(gu);
  const auto bv = pair.v.transpose_times(gv);
  const SmallMatrix auu = weighted_gram(pair.u, hxx, pair.u);
  const SmallMatrix auv = weighted_gram(pair.u, hxy, pair.v);
  const SmallMatrix avv = weighted_gram(pair.v, hyy, pair.v);
  SmallMatrix a(k, k);
  for (std::size_t i = 0; i < ku; ++i)
    for (std::size_t j = 0; j < ku; ++j) a(i, j) = auu(i, j);
  for (std::size_t i = 0; i < ku; ++i)
    for (std::size_t j = 0; j < kv; ++j) {
      a(i, ku + j) = auv(i, j);
      a(ku + j, i) = auv(i, j);
    }
  for (std::size_t i = 0; i < kv; ++i)
    for (std::size_t j = 0; j < kv; ++j) a(ku + i, ku + j) = avv(i, j);

  std::vector<double> b(k), rhs(k);
  for (std::size_t i = 0; i < ku; ++i) b[i] = bu[i];
  for (std::size_t i = 0; i < kv; ++i) b[ku + i] = bv[i];
  for (std::size_t i = 0; i < k; ++i) rhs[i] = -b[i];

  SolveResult out;
  const auto c = detail::damped_solve(a, rhs, damping, out.report.damping_used);
  out.report.coefficients = c;
  out.report.predicted_decrease = detail::model_decrease(a, b, c);

  const auto du = pair.u.times(std::span<const double>(c.data(), ku));
  const auto dv = pair.v.times(std::span<const double>(c.data() + ku, kv));
  out.delta = GridD(x.width(), x.height(), 2);
  std::vector<double> nu(n), nv(n);
  for (std::size_t p = 0; p < n; ++p) {
    out.delta.at_pixel(p, 0) = ru[p] + du[p];
    out.delta.at_pixel(p, 1) = rv[p] + dv[p];
    nu[p] = xu[p] + out.delta.at_pixel(p, 0);
    nv[p] = xv[p] + out.delta.at_pixel(p, 1);
  }
  const double eu = norm2(project(pair.u, nu).residual);
  const double ev = norm2(project(pair.v, nv).residual);
  out.report.projection_residual_norm = std::sqrt(eu * eu + ev * ev);
  return out;
}

}  // namespace lsm
