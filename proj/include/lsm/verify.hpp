#pragma once

// Randomized property suites comparing the fast solver paths against dense
// reference constructions and finite differences.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsm/basis_gen.hpp"
#include "lsm/data_terms.hpp"
#include "lsm/equivalence.hpp"
#include "lsm/grid.hpp"
#include "lsm/linalg.hpp"
#include "lsm/subspace.hpp"
#include "lsm/synthetic.hpp"

namespace lsm::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // largest observed error
  double tolerance = 0.0;
  std::size_t trials = 0;
  double ms = 0.0;
  std::string note;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(eng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
  std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(eng); }
};

inline SubspaceBasis random_basis(Rng& rng, std::size_t n, std::size_t k, bool orthonormal) {
  std::vector<double> cols(n * k);
  for (auto& v : cols) v = rng.normal();
  return SubspaceBasis(n, k, std::move(cols), orthonormal ? Orthonormalize::yes : Orthonormalize::no);
}

inline GridD random_grid(Rng& rng, std::size_t w, std::size_t h, std::size_t c, double lo, double hi) {
  GridD g(w, h, c);
  for (auto& v : g.storage()) v = rng.uniform(lo, hi);
  return g;
}

inline Eigen::MatrixXd dense_projection_minus_identity(const Eigen::MatrixXd& v) {
  const Eigen::MatrixXd p = v * (v.transpose() * v).ldlt().solve(v.transpose());
  return p - Eigen::MatrixXd::Identity(v.rows(), v.rows());
}

inline double max_abs_diff(const std::vector<double>& a, const Eigen::VectorXd& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b(static_cast<Eigen::Index>(i))));
  return m;
}

// Smooth 3-channel features from the synthetic texture, shifted per call.
inline GridD smooth_features(Rng& rng, std::size_t w, std::size_t h) {
  const synthetic::Texture tex(rng.eng());
  const double ox = rng.uniform(0.0, 50.0), oy = rng.uniform(0.0, 50.0);
  GridD g(w, h, 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) g(x, y, c) = tex(static_cast<double>(x) + ox, static_cast<double>(y) + oy, c);
  return g;
}

// A coordinate offset that keeps p + x strictly between lattice lines, with
// margin for the finite-difference step.
inline double non_lattice_offset(Rng& rng, double base, double lo, double hi) {
  while (true) {
    const double v = rng.uniform(lo, hi);
    const double frac = (base + v) - std::floor(base + v);
    if (frac > 0.05 && frac < 0.95) return v;
  }
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace detail

// Scalar (Eq. 4 and projected) and flow block solves against dense Eigen
// constructions with explicit N x N diagonal matrices and projectors.
inline SuiteResult solver_oracle(std::size_t instances = 200, std::uint64_t seed = 1) {
  using namespace detail;
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult res{"solver-oracle", true, 0.0, 1e-7, instances, 0.0, ""};
  std::size_t flow_count = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t w = rng.index(2, 8), h = rng.index(2, 8), n = w * h;
    const std::size_t k = rng.index(1, std::min<std::size_t>(8, n - 1));
    const bool ortho = rng.index(0, 1) == 1;
    const double damping = rng.index(0, 1) == 1 ? 1e-3 : 0.0;
    const auto kind = i % 3;
    double err = 0.0;
    if (kind < 2) {
      const SubspaceBasis basis = random_basis(rng, n, k, ortho);
      QuadraticModel q{random_grid(rng, w, h, 1, -1.0, 1.0), random_grid(rng, w, h, 1, 0.1, 2.0), 0.0};
      GridD x = kind == 0 ? GridD(w, h, 1, 0.0) : random_grid(rng, w, h, 1, -2.0, 2.0);
      const auto c = kind == 0 ? solve_subspace(q, basis, damping) : solve_projected(q, basis, x, damping).report.coefficients;

      const Eigen::MatrixXd v = basis_matrix(basis);
      const Eigen::MatrixXd dmat = to_eigen(q.h.data()).asDiagonal();
      const Eigen::VectorXd r = dense_projection_minus_identity(v) * to_eigen(x.data());
      const Eigen::MatrixXd a = v.transpose() * dmat * v + damping * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
      const Eigen::VectorXd b = v.transpose() * (to_eigen(q.d.data()) + dmat * r);
      err = max_abs_diff(c, -a.partialPivLu().solve(b));
    } else {
      ++flow_count;
      const std::size_t kv = rng.index(1, std::min<std::size_t>(8, n - 1));
      const FlowBasisPair pair(random_basis(rng, n, k, ortho), random_basis(rng, n, kv, ortho));
      // PSD blocks from random 3-channel Jacobians.
      QuadraticModel q{random_grid(rng, w, h, 2, -1.0, 1.0), GridD(w, h, 3), 0.0};
      for (std::size_t p = 0; p < n; ++p) {
        double xx = 0.0, xy = 0.0, yy = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double gx = rng.normal(), gy = rng.normal();
          xx += gx * gx;
          xy += gx * gy;
          yy += gy * gy;
        }
        q.h.at_pixel(p, 0) = xx;
        q.h.at_pixel(p, 1) = xy;
        q.h.at_pixel(p, 2) = yy;
      }
      const GridD x = random_grid(rng, w, h, 2, -2.0, 2.0);
      const auto c = solve_flow_subspace(q, pair, x, damping).report.coefficients;

      const auto ni = static_cast<Eigen::Index>(n);
      const auto ku = static_cast<Eigen::Index>(k), kvv = static_cast<Eigen::Index>(kv);
      Eigen::MatrixXd hmat = Eigen::MatrixXd::Zero(2 * ni, 2 * ni);
      Eigen::VectorXd dvec(2 * ni), xu(ni), xv(ni);
      for (Eigen::Index p = 0; p < ni; ++p) {
        const auto pp = static_cast<std::size_t>(p);
        hmat(p, p) = q.h.at_pixel(pp, 0);
        hmat(p, ni + p) = hmat(ni + p, p) = q.h.at_pixel(pp, 1);
        hmat(ni + p, ni + p) = q.h.at_pixel(pp, 2);
        dvec(p) = q.d.at_pixel(pp, 0);
        dvec(ni + p) = q.d.at_pixel(pp, 1);
        xu(p) = x.at_pixel(pp, 0);
        xv(p) = x.at_pixel(pp, 1);
      }
      const Eigen::MatrixXd vu = basis_matrix(pair.u), vv = basis_matrix(pair.v);
      Eigen::MatrixXd vblk = Eigen::MatrixXd::Zero(2 * ni, ku + kvv);
      vblk.topLeftCorner(ni, ku) = vu;
      vblk.bottomRightCorner(ni, kvv) = vv;
      Eigen::VectorXd r(2 * ni);
      r.head(ni) = dense_projection_minus_identity(vu) * xu;
      r.tail(ni) = dense_projection_minus_identity(vv) * xv;
      const Eigen::MatrixXd a = vblk.transpose() * hmat * vblk + damping * Eigen::MatrixXd::Identity(ku + kvv, ku + kvv);
      const Eigen::VectorXd b = vblk.transpose() * (dvec + hmat * r);
      err = max_abs_diff(c, -a.partialPivLu().solve(b));
    }
    res.worst = std::max(res.worst, err);
  }
  res.passed = res.worst <= res.tolerance;
  res.ms = elapsed_ms(t0);
  res.note = std::to_string(flow_count) + " flow block systems";
  return res;
}

// ‖(I - P)(x + Δx)‖ / ‖x + Δx‖ after projected scalar and flow solves.
inline SuiteResult subspace_invariant(std::size_t instances = 100, std::uint64_t seed = 2) {
  using namespace detail;
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult res{"subspace-invariant", true, 0.0, 1e-9, instances, 0.0, ""};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t w = rng.index(3, 10), h = rng.index(3, 10), n = w * h;
    const std::size_t k = rng.index(1, 8);
    const bool ortho = i % 4 != 0;
    double rel = 0.0;
    if (i % 2 == 0) {
      const SubspaceBasis basis = random_basis(rng, n, k, ortho);
      QuadraticModel q{random_grid(rng, w, h, 1, -1.0, 1.0), random_grid(rng, w, h, 1, 0.05, 2.0), 0.0};
      const GridD x = random_grid(rng, w, h, 1, -3.0, 3.0);
      const auto sol = solve_projected(q, basis, x, 1e-6);
      std::vector<double> upd(n);
      for (std::size_t p = 0; p < n; ++p) upd[p] = x.at_pixel(p) + sol.delta.at_pixel(p);
      rel = norm2(project(basis, upd).residual) / std::max(norm2(upd), 1e-300);
    } else {
      const FlowBasisPair pair(random_basis(rng, n, k, ortho), random_basis(rng, n, rng.index(1, 8), ortho));
      QuadraticModel q{random_grid(rng, w, h, 2, -1.0, 1.0), GridD(w, h, 3), 0.0};
      for (std::size_t p = 0; p < n; ++p) {
        const double a = rng.uniform(0.1, 2.0), c = rng.uniform(0.1, 2.0);
        const double b = rng.uniform(-0.9, 0.9) * std::sqrt(a * c);
        q.h.at_pixel(p, 0) = a;
        q.h.at_pixel(p, 1) = b;
        q.h.at_pixel(p, 2) = c;
      }
      const GridD x = random_grid(rng, w, h, 2, -3.0, 3.0);
      const auto sol = solve_flow_subspace(q, pair, x, 1e-6);
      std::vector<double> uu(n), vv(n);
      for (std::size_t p = 0; p < n; ++p) {
        uu[p] = x.at_pixel(p, 0) + sol.delta.at_pixel(p, 0);
        vv[p] = x.at_pixel(p, 1) + sol.delta.at_pixel(p, 1);
      }
      const double eu = norm2(project(pair.u, uu).residual), ev = norm2(project(pair.v, vv).residual);
      const double nu = norm2(uu), nv = norm2(vv);
      rel = std::sqrt(eu * eu + ev * ev) / std::max(std::sqrt(nu * nu + nv * nv), 1e-300);
    }
    res.worst = std::max(res.worst, rel);
  }
  res.passed = res.worst <= res.tolerance;
  res.ms = elapsed_ms(t0);
  return res;
}

// Constructed consistent regularized systems: dense least-norm coefficients
// against the projected subspace solve.
inline SuiteResult proposition(std::size_t instances = 100, std::uint64_t seed = 3) {
  using namespace detail;
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult res{"proposition", true, 0.0, 1e-7, instances, 0.0, ""};
  double worst_known = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = rng.index(8, 64), k = rng.index(1, std::min<std::size_t>(8, n / 2));
    const SubspaceBasis basis = random_basis(rng, n, k, i % 2 == 0);
    std::vector<double> h(n), x(n), c0(k);
    for (auto& v : h) v = rng.uniform(0.1, 3.0);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    for (auto& v : c0) v = rng.uniform(-1.0, 1.0);
    const auto sys = build_consistent_instance(basis, h, c0, x);
    const auto rep = verify_proposition(sys, basis);
    res.worst = std::max(res.worst, rep.max_abs_diff);
    for (std::size_t j = 0; j < k; ++j) worst_known = std::max(worst_known, std::abs(rep.c_dense[j] - c0[j]));
  }
  res.passed = res.worst <= res.tolerance && worst_known <= res.tolerance;
  res.ms = elapsed_ms(t0);
  res.note = "max |c_dense - c0| = " + std::to_string(worst_known);
  return res;
}

// V^T R x without R against the explicit dense product.
inline SuiteResult fast_vtrx_identity(std::size_t instances = 100, std::uint64_t seed = 4) {
  using namespace detail;
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult res{"fast-vtrx", true, 0.0, 1e-9, instances, 0.0, ""};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = rng.index(8, 64), k = rng.index(1, 8);
    const SubspaceBasis basis = random_basis(rng, n, k, i % 2 == 0);
    std::vector<double> h(n), x(n);
    for (auto& v : h) v = rng.uniform(0.1, 3.0);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    const auto fast = fast_vtrx(basis, h, x);
    const Eigen::MatrixXd v = basis_matrix(basis);
    const Eigen::MatrixXd r = Eigen::MatrixXd(to_eigen(h).asDiagonal()) * dense_projection_minus_identity(v);
    res.worst = std::max(res.worst, max_abs_diff(fast, v.transpose() * r * to_eigen(x)));
  }
  res.passed = res.worst <= res.tolerance;
  res.ms = elapsed_ms(t0);
  return res;
}

// d is the derivative of half the energy, so 2 d is compared with the central
// difference of the energy.
inline SuiteResult gradient_labeling(std::size_t trials = 50, std::uint64_t seed = 5) {
  using namespace detail;
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult res{"gradient-labeling", true, 0.0, 1e-4, trials, 0.0, ""};
  const double step = 1e-5;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t w = 6, h = 5;
    GridD x = random_grid(rng, w, h, 1, -1.5, 1.5);
    LabelProbabilities probs{GridD(w, h, 1), GridD(w, h, 1)};
    for (std::size_t p = 0; p < x.pixels(); ++p) {
      probs.alpha.at_pixel(p) = rng.uniform(0.0, 1.0);
      probs.beta.at_pixel(p) = 1.0 - probs.alpha.at_pixel(p);
    }
    const std::size_t p = rng.index(0, x.pixels() - 1);
    const auto q = labeling_quadratic(x, probs);
    GridD xp = x, xm = x;
    xp.at_pixel(p) += step;
    xm.at_pixel(p) -= step;
    const double fd = (labeling_energy(xp, probs) - labeling_energy(xm, probs)) / (2.0 * step);
    res.worst = std::max(res.worst, relative_error(2.0 * q.d.at_pixel(p), fd));
  }
  res.passed = res.worst <= res.tolerance;
  res.ms = elapsed_ms(t0);
  return res;
}

inline SuiteResult gradient_warping(bool flow, std::size_t trials = 50, std::uint64_t seed = 6) {
  using namespace detail;
  const auto t0 = Clock::now();
  Rng rng(seed + (flow ? 100 : 0));
  SuiteResult res{flow ? "gradient-flow" : "gradient-stereo", true, 0.0, 1e-3, trials, 0.0, ""};
  const double step = 1e-5;
  const std::size_t w = 16, h = 12;
  for (std::size_t t = 0; t < trials; ++t) {
    const GridD src = smooth_features(rng, w, h);
    const GridD tgt = smooth_features(rng, w, h);
    GridD x(w, h, flow ? 2 : 1);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        // Keep every warped coordinate inside the grid and off the lattice.
        const double bx = static_cast<double>(xx), by = static_cast<double>(y);
        const double lox = std::max(-1.5, 0.1 - bx), hix = std::min(1.5, static_cast<double>(w) - 1.1 - bx);
        x(xx, y, 0) = non_lattice_offset(rng, bx, lox, hix);
        if (flow) {
          const double loy = std::max(-1.5, 0.1 - by), hiy = std::min(1.5, static_cast<double>(h) - 1.1 - by);
          x(xx, y, 1) = non_lattice_offset(rng, by, loy, hiy);
        }
      }
    }
    const auto cm = flow ? flow_quadratic(src, tgt, x, 1) : stereo_quadratic(src, tgt, x, 1);
    const std::size_t p = rng.index(0, x.pixels() - 1);
    for (std::size_t c = 0; c < x.channels(); ++c) {
      GridD xp = x, xm = x;
      xp.at_pixel(p, c) += step;
      xm.at_pixel(p, c) -= step;
      const double fd = (correspondence_energy(src, tgt, xp) - correspondence_energy(src, tgt, xm)) / (2.0 * step);
      res.worst = std::max(res.worst, relative_error(2.0 * cm.model.d.at_pixel(p, c), fd));
    }
  }
  res.passed = res.worst <= res.tolerance;
  res.ms = elapsed_ms(t0);
  return res;
}

// Per-group determinant ratios against cramer2 on flow models from random
// features and displacements.
inline SuiteResult cramer_contexts(std::size_t trials = 20, std::uint64_t seed = 7) {
  using namespace detail;
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult res{"cramer-contexts", true, 0.0, 1e-9, trials, 0.0, ""};
  std::size_t checked = 0, skipped = 0;
  double lu_gap = 0.0;  // relative gap to a dense LU solve, informational
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t w = 12, h = 10, m = 4, c = 8;
    const GridD src = random_grid(rng, w, h, c, 0.0, 1.0);
    const GridD tgt = random_grid(rng, w, h, c, 0.0, 1.0);
    const GridD x = random_grid(rng, w, h, 2, -2.0, 2.0);
    const auto cm = flow_quadratic(src, tgt, x, m);
    const auto ctx = build_cramer_context(cm.grouped);
    for (std::size_t p = 0; p < x.pixels(); ++p) {
      for (std::size_t g = 0; g < m; ++g) {
        const double det = ctx.det_full.at_pixel(p, g);
        if (!(std::abs(det) > 1e-6)) {
          ++skipped;
          continue;
        }
        const Mat2 block{{{cm.grouped.second.at_pixel(p, 3 * g), cm.grouped.second.at_pixel(p, 3 * g + 1)},
                          {cm.grouped.second.at_pixel(p, 3 * g + 1), cm.grouped.second.at_pixel(p, 3 * g + 2)}}};
        const Vec2 s{cm.grouped.first.at_pixel(p, 2 * g), cm.grouped.first.at_pixel(p, 2 * g + 1)};
        const Vec2 z = cramer2(block, s);
        res.worst = std::max({res.worst, std::abs(ctx.det_x.at_pixel(p, g) / det - z[0]),
                              std::abs(ctx.det_y.at_pixel(p, g) / det - z[1])});
        Eigen::Matrix2d a;
        a << block[0][0], block[0][1], block[1][0], block[1][1];
        const Eigen::Vector2d ref = a.fullPivLu().solve(Eigen::Vector2d(s[0], s[1]));
        const double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
        lu_gap = std::max({lu_gap, std::abs(z[0] - ref(0)) / scale, std::abs(z[1] - ref(1)) / scale});
        ++checked;
      }
    }
  }
  res.passed = res.worst <= res.tolerance && checked > 0;
  res.ms = elapsed_ms(t0);
  std::ostringstream gap;
  gap << lu_gap;
  res.note = std::to_string(checked) + " blocks checked, " + std::to_string(skipped) + " near-singular skipped, LU gap " +
             gap.str();
  return res;
}

inline std::vector<SuiteResult> run_all() {
  return {solver_oracle(),         subspace_invariant(),      proposition(),   fast_vtrx_identity(),
          gradient_labeling(),     gradient_warping(false),   gradient_warping(true), cramer_contexts()};
}

}  // namespace lsm::verify
