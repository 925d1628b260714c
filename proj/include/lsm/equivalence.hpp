#pragma once

// Executable check that subspace minimization with the projection correction
// coincides with regularized minimization when R = D (P - I).
// Dense N x N matrices are formed here on purpose; keep N small (<= 256).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lsm/data_terms.hpp"
#include "lsm/error.hpp"
#include "lsm/grid.hpp"
#include "lsm/linalg.hpp"
#include "lsm/subspace.hpp"

namespace lsm {

inline constexpr std::size_t kMaxDenseOracleSize = 256;

struct DenseRegularizedSystem {
  Eigen::MatrixXd d_mat;  // diag(h)
  Eigen::MatrixXd p_mat;  // V (V^T V)^{-1} V^T
  Eigen::MatrixXd r_mat;  // D (P - I)
  Eigen::VectorXd d_vec;
  Eigen::VectorXd x;
};

struct PropositionReport {
  std::vector<double> c_dense;
  std::vector<double> c_sub;
  double max_abs_diff = 0.0;
  double dense_residual = 0.0;
};

inline Eigen::MatrixXd basis_matrix(const SubspaceBasis& basis) {
  Eigen::MatrixXd v(basis.n(), basis.k());
  for (std::size_t j = 0; j < basis.k(); ++j) {
    const auto col = basis.column(j);
    for (std::size_t i = 0; i < basis.n(); ++i) v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  return v;
}

inline Eigen::MatrixXd explicit_projection(const SubspaceBasis& basis) {
  const Eigen::MatrixXd v = basis_matrix(basis);
  const Eigen::MatrixXd gram = v.transpose() * v;
  return v * gram.ldlt().solve(v.transpose());
}

inline Eigen::VectorXd to_eigen(std::span<const double> s) {
  return Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

// Chooses d so that Δx = V c0 solves (D + R) Δx = -(d + R x) exactly:
// d = -D r - D V c0 with r = (P - I) x.
inline DenseRegularizedSystem build_consistent_instance(const SubspaceBasis& basis, std::span<const double> h,
                                                        std::span<const double> c0, std::span<const double> x) {
  const std::size_t n = basis.n();
  if (n > kMaxDenseOracleSize) throw InvalidArgument("dense oracle limited to N <= 256");
  if (h.size() != n || x.size() != n || c0.size() != basis.k()) throw InvalidArgument("instance dimensions disagree");
  for (double v : h) {
    if (!(v > 0.0)) throw InvalidArgument("build_consistent_instance requires h > 0");
  }
  DenseRegularizedSystem sys;
  const Eigen::VectorXd hv = to_eigen(h);
  sys.d_mat = hv.asDiagonal();
  sys.p_mat = explicit_projection(basis);
  const auto ni = static_cast<Eigen::Index>(n);
  sys.r_mat = sys.d_mat * (sys.p_mat - Eigen::MatrixXd::Identity(ni, ni));
  sys.x = to_eigen(x);
  const Eigen::VectorXd r = (sys.p_mat - Eigen::MatrixXd::Identity(ni, ni)) * sys.x;
  const Eigen::VectorXd vc0 = basis_matrix(basis) * to_eigen(c0);
  sys.d_vec = -(sys.d_mat * r) - sys.d_mat * vc0;
  return sys;
}

// (a) least-norm Δx of the dense regularized system, (b) its coefficients
// (V^T V)^{-1} V^T Δx, (c) the projected subspace solve on the same data.
inline PropositionReport verify_proposition(const DenseRegularizedSystem& sys, const SubspaceBasis& basis) {
  const Eigen::MatrixXd lhs = sys.d_mat + sys.r_mat;
  const Eigen::VectorXd rhs = -(sys.d_vec + sys.r_mat * sys.x);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(lhs);
  cod.setThreshold(1e-10);
  const Eigen::VectorXd dx = cod.solve(rhs);

  PropositionReport rep;
  rep.dense_residual = (lhs * dx - rhs).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (rep.dense_residual > 1e-8 * scale) {
    throw InconsistentInstance("dense regularized system is inconsistent (residual " +
                               std::to_string(rep.dense_residual) + ")");
  }
  const Eigen::MatrixXd v = basis_matrix(basis);
  const Eigen::VectorXd c_dense = (v.transpose() * v).ldlt().solve(v.transpose() * dx);
  rep.c_dense.assign(c_dense.data(), c_dense.data() + c_dense.size());

  const std::size_t n = basis.n();
  QuadraticModel q{GridD(n, 1, 1), GridD(n, 1, 1), 0.0};
  GridD x(n, 1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    q.d.at_pixel(i) = sys.d_vec(ii);
    q.h.at_pixel(i) = sys.d_mat(ii, ii);
    x.at_pixel(i) = sys.x(ii);
  }
  rep.c_sub = solve_projected(q, basis, x, 0.0).report.coefficients;
  for (std::size_t j = 0; j < rep.c_sub.size(); ++j) {
    rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(rep.c_sub[j] - rep.c_dense[j]));
  }
  return rep;
}

// V^T R x = (V^T D V)(V^T V)^{-1} V^T x - V^T D x, without forming R.
inline std::vector<double> fast_vtrx(const SubspaceBasis& basis, std::span<const double> h, std::span<const double> x) {
  if (h.size() != basis.n() || x.size() != basis.n()) throw InvalidArgument("fast_vtrx dimension mismatch");
  const SmallMatrix vtdv = weighted_gram(basis, h, basis);
  const auto coef = cholesky_solve(basis.gram(), basis.transpose_times(x));
  auto out = vtdv * coef;
  std::vector<double> hx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) hx[i] = h[i] * x[i];
  const auto vthx = basis.transpose_times(hx);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] -= vthx[j];
  return out;
}

}  // namespace lsm
