#include <gtest/gtest.h>

#include <random>

#include "lsm/equivalence.hpp"
#include "lsm/verify.hpp"

namespace {

lsm::SubspaceBasis random_basis(std::size_t n, std::size_t k, std::uint64_t seed, bool ortho) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> cols(n * k);
  for (auto& v : cols) v = nd(rng);
  return lsm::SubspaceBasis(n, k, std::move(cols), ortho ? lsm::Orthonormalize::yes : lsm::Orthonormalize::no);
}

std::vector<double> uniform(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Equivalence, ProjectionIsIdempotentAndAnnihilatedByR) {
  const auto basis = random_basis(24, 4, 1, false);
  const Eigen::MatrixXd p = lsm::explicit_projection(basis);
  EXPECT_LE((p * p - p).cwiseAbs().maxCoeff(), 1e-10);
  const auto h = uniform(24, 0.1, 3.0, 2);
  const auto sys = lsm::build_consistent_instance(basis, h, std::vector<double>(4, 0.0), uniform(24, -1, 1, 3));
  EXPECT_LE((sys.r_mat * lsm::basis_matrix(basis)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Equivalence, ConsistentInstanceRecoversCoefficients) {
  for (bool ortho : {true, false}) {
    const auto basis = random_basis(32, 5, 4, ortho);
    const auto c0 = uniform(5, -1, 1, 5);
    const auto sys = lsm::build_consistent_instance(basis, uniform(32, 0.1, 3.0, 6), c0, uniform(32, -2, 2, 7));
    const auto rep = lsm::verify_proposition(sys, basis);
    EXPECT_LE(rep.dense_residual, 1e-9);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_NEAR(rep.c_dense[j], c0[j], 1e-7);
      EXPECT_NEAR(rep.c_sub[j], c0[j], 1e-7);
    }
  }
}

TEST(Equivalence, SolutionInSpanAndZeroTargetGivesZeroCoefficients) {
  const auto basis = random_basis(20, 3, 8, true);
  const auto coef = uniform(3, -1, 1, 9);
  const auto x = basis.times(coef);
  const auto sys = lsm::build_consistent_instance(basis, uniform(20, 0.5, 2.0, 10), std::vector<double>(3, 0.0), x);
  const auto rep = lsm::verify_proposition(sys, basis);
  for (double c : rep.c_sub) EXPECT_NEAR(c, 0.0, 1e-9);
}

TEST(Equivalence, IdentityCurvatureClosedForm) {
  // D = I, orthonormal V: c = -V^T (d + r).
  const std::size_t n = 16;
  const auto basis = random_basis(n, 3, 11, true);
  const auto x = uniform(n, -1, 1, 12);
  const auto d = uniform(n, -1, 1, 13);
  lsm::QuadraticModel q{lsm::GridD(n, 1, 1, d), lsm::GridD(n, 1, 1, 1.0), 0.0};
  const auto sol = lsm::solve_projected(q, basis, lsm::GridD(n, 1, 1, x), 0.0);
  const auto r = lsm::project(basis, x).projection;
  std::vector<double> rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = d[i] + (r[i] - x[i]);
  const auto expect = basis.transpose_times(rhs);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(sol.report.coefficients[j], -expect[j], 1e-10);
}

TEST(Equivalence, FastProductSpecialCases) {
  const std::size_t n = 18;
  const auto basis = random_basis(n, 4, 14, false);
  const auto h = uniform(n, 0.1, 3.0, 15);
  // x in span(V): P x = x, so R x = 0.
  const auto in_span = basis.times(uniform(4, -1, 1, 16));
  for (double v : lsm::fast_vtrx(basis, h, in_span)) EXPECT_NEAR(v, 0.0, 1e-10);
  // Constant h: V^T D (P - I) x = h V^T (P - I) x = 0 for any x.
  for (double v : lsm::fast_vtrx(basis, std::vector<double>(n, 2.5), uniform(n, -1, 1, 17))) EXPECT_NEAR(v, 0.0, 1e-10);
  EXPECT_THROW(lsm::fast_vtrx(basis, std::vector<double>(n - 1, 1.0), in_span), lsm::InvalidArgument);
}

TEST(Equivalence, InconsistentInstanceIsReported) {
  const auto basis = random_basis(12, 2, 18, true);
  auto sys = lsm::build_consistent_instance(basis, uniform(12, 0.5, 2.0, 19), std::vector<double>{0.3, -0.2},
                                            uniform(12, -1, 1, 20));
  // Zero a curvature entry: the row of D + R vanishes while the rhs does not.
  sys.d_mat(0, 0) = 0.0;
  sys.r_mat.row(0).setZero();
  sys.d_vec(0) = 5.0;
  EXPECT_THROW(lsm::verify_proposition(sys, basis), lsm::InconsistentInstance);
}

TEST(Equivalence, InstanceValidation) {
  const auto basis = random_basis(8, 2, 21, true);
  EXPECT_THROW(lsm::build_consistent_instance(basis, std::vector<double>(8, 0.0), std::vector<double>(2),
                                              std::vector<double>(8)),
               lsm::InvalidArgument);
  EXPECT_THROW(lsm::build_consistent_instance(basis, std::vector<double>(7, 1.0), std::vector<double>(2),
                                              std::vector<double>(8)),
               lsm::InvalidArgument);
}

TEST(Equivalence, RandomSuites) {
  const auto a = lsm::verify::proposition(30, 22);
  EXPECT_TRUE(a.passed) << a.worst << " " << a.note;
  const auto b = lsm::verify::fast_vtrx_identity(30, 23);
  EXPECT_TRUE(b.passed) << b.worst;
}
