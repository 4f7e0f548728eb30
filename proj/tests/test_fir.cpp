#include <gtest/gtest.h>

#include <random>

#include "rfd/fir.hpp"
#include "rfd/linear_map.hpp"
#include "rfd/qi.hpp"

using namespace rfd;

namespace {

FirTransferMatrix random_fir(std::mt19937_64& rng, Eigen::Index rows,
                             Eigen::Index cols, int taps) {
  std::normal_distribution<double> dist;
  std::vector<Matrix> t;
  for (int k = 0; k < taps; ++k) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    t.push_back(m);
  }
  return FirTransferMatrix(std::move(t));
}

FirTransferMatrix scalar_fir(std::initializer_list<double> taps) {
  std::vector<Matrix> t;
  for (double v : taps) t.push_back(Matrix::Constant(1, 1, v));
  return FirTransferMatrix(std::move(t));
}

}  // namespace

TEST(Fir, ConstructionRejectsBadInput) {
  EXPECT_THROW(FirTransferMatrix({}), std::invalid_argument);
  std::vector<Matrix> mixed = {Matrix::Zero(2, 2), Matrix::Zero(2, 3)};
  EXPECT_THROW(FirTransferMatrix(std::move(mixed)), std::invalid_argument);
  std::vector<Matrix> nan_tap = {Matrix::Constant(1, 1, std::nan(""))};
  EXPECT_THROW(FirTransferMatrix(std::move(nan_tap)), std::invalid_argument);
}

TEST(Fir, H2NormKnownValues) {
  EXPECT_DOUBLE_EQ(h2_norm(FirTransferMatrix({Matrix::Identity(2, 2)})),
                   std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(h2_norm(FirTransferMatrix::zero(3, 2, 4)), 0.0);
  EXPECT_DOUBLE_EQ(h2_norm(scalar_fir({1.0, 2.0})), std::sqrt(5.0));
}

TEST(Fir, H2NormAxioms) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_fir(rng, 3, 2, 4);
    auto h = random_fir(rng, 3, 2, 4);
    EXPECT_NEAR(h2_norm(scale(g, -2.5)), 2.5 * h2_norm(g),
                1e-12 * (1.0 + h2_norm(g)));
    EXPECT_LE(h2_norm(add(g, h)), h2_norm(g) + h2_norm(h) + 1e-12);
    EXPECT_NEAR(inner_product(g, g), h2_norm_sq(g), 1e-12 * h2_norm_sq(g));
  }
}

TEST(Fir, ConvolveKnownValues) {
  auto h = scalar_fir({3.0, -1.0, 2.0});
  auto conv = convolve(FirTransferMatrix::identity(1), h);
  ASSERT_EQ(conv.n_taps(), 3);
  for (int k = 0; k < 3; ++k)
    EXPECT_DOUBLE_EQ(conv.tap(k)(0, 0), h.tap(k)(0, 0));

  auto delay = convolve(scalar_fir({0.0, 1.0}), scalar_fir({5.0, 7.0}));
  ASSERT_EQ(delay.n_taps(), 3);
  EXPECT_DOUBLE_EQ(delay.tap(0)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(delay.tap(1)(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(delay.tap(2)(0, 0), 7.0);

  auto binom = convolve(scalar_fir({1.0, 1.0}), scalar_fir({1.0, 1.0}));
  EXPECT_DOUBLE_EQ(binom.tap(0)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(binom.tap(1)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(binom.tap(2)(0, 0), 1.0);

  std::mt19937_64 rng(1);
  EXPECT_THROW(
      convolve(random_fir(rng, 2, 3, 1), FirTransferMatrix::zero(2, 2)),
      std::invalid_argument);
}

TEST(Fir, ConvolveAssociativeBilinear) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_fir(rng, 2, 3, 3);
    auto b = random_fir(rng, 3, 2, 2);
    auto c = random_fir(rng, 2, 2, 4);
    auto left = convolve(convolve(a, b), c);
    auto right = convolve(a, convolve(b, c));
    EXPECT_NEAR(h2_norm(add(left, right, -1.0)), 0.0,
                1e-10 * (1.0 + h2_norm(left)));
    auto b2 = random_fir(rng, 3, 2, 2);
    auto lin = convolve(a, add(b, b2, 2.0));
    auto expanded = add(convolve(a, b), convolve(a, b2), 2.0);
    EXPECT_NEAR(h2_norm(add(lin, expanded, -1.0)), 0.0,
                1e-10 * (1.0 + h2_norm(lin)));
  }
}

TEST(Fir, MaskProjection) {
  std::mt19937_64 rng(13);
  auto g = random_fir(rng, 3, 3, 4);
  auto all = apply_mask(g, SparsityMask::all_true(3, 3));
  EXPECT_NEAR(h2_norm(add(g, all, -1.0)), 0.0, 0.0);
  EXPECT_TRUE(apply_mask(g, SparsityMask::all_false(3, 3)).is_zero());
  BoolMatrix pat = BoolMatrix::Constant(3, 3, false);
  pat(0, 1) = pat(2, 2) = true;
  SparsityMask m({}, pat);
  auto once = apply_mask(g, m);
  auto twice = apply_mask(once, m);
  EXPECT_NEAR(h2_norm(add(once, twice, -1.0)), 0.0, 0.0);
}

TEST(LinearMap, IdentityMaterialization) {
  auto id = FirTransferMatrix::identity(2);
  // with matching horizon and order the map is the identity matrix
  auto map = materialize_map(id, id, 2, TapSpec{3, 0});
  EXPECT_TRUE(map.mat.isIdentity(1e-14));
}

TEST(LinearMap, DelayColumnStructure) {
  // left = 1/z on scalars: input tap 0 lands on output tap 1
  auto map = materialize_map(scalar_fir({0.0, 1.0}),
                             FirTransferMatrix::identity(1), 2, TapSpec{1, 0});
  ASSERT_EQ(map.mat.rows(), 3);
  ASSERT_EQ(map.mat.cols(), 1);
  EXPECT_DOUBLE_EQ(map.mat(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(map.mat(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(map.mat(2, 0), 0.0);
}

TEST(LinearMap, AgreesWithConvolution) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    auto left = random_fir(rng, 3, 2, 3);
    auto right = random_fir(rng, 4, 3, 2);
    auto u = random_fir(rng, 2, 4, 2);
    const int t = 5;
    auto map = materialize_map(left, right, t, TapSpec{2, 0});
    auto via_map = map.apply(u);
    auto direct = convolve(convolve(left, u), right).truncated(t + 1);
    EXPECT_NEAR(h2_norm(add(via_map, direct, -1.0)), 0.0,
                1e-12 * (1.0 + h2_norm(direct)));
  }
}

TEST(LinearMap, AdjointIdentity) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    auto left = random_fir(rng, 3, 2, 3);
    auto right = random_fir(rng, 4, 3, 2);
    auto map = materialize_map(left, right, 5, TapSpec{2, 0});
    auto u = random_fir(rng, 2, 4, 2);
    auto v = random_fir(rng, 3, 3, 6);
    const double lhs = inner_product(map.apply(u), v);
    const double rhs = inner_product(u, map.apply_adjoint(v));
    EXPECT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));
  }
}

TEST(LinearMap, InputConventionShiftsAlignment) {
  auto h = scalar_fir({0.0, 0.0, 1.0, 0.5});
  auto id = FirTransferMatrix::identity(1);
  auto from0 = materialize_map(h, id, 4, tap_spec_for_order(1, TapConvention::kZeroToVMinus1));
  auto from1 = materialize_map(h, id, 4, tap_spec_for_order(1, TapConvention::kOneToV));
  auto wide = materialize_map(h, id, 4, tap_spec_for_order(1, TapConvention::kZeroToV));
  EXPECT_EQ(from0.mat.cols(), 1);
  EXPECT_EQ(from1.mat.cols(), 1);
  EXPECT_EQ(wide.mat.cols(), 2);
  // the shifted convention delays the response by one tap
  EXPECT_DOUBLE_EQ(from0.mat(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(from1.mat(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(from1.mat(3, 0), 1.0);
}

TEST(LinearMap, OrderBeyondHorizonRejected) {
  auto id = FirTransferMatrix::identity(2);
  EXPECT_THROW(materialize_map(id, id, 1, TapSpec{3, 0}),
               std::invalid_argument);
  // variable dimensions follow from the factors; applying a mismatched
  // variable is rejected at vectorization
  auto map = materialize_map(id, id, 2, TapSpec{1, 0});
  EXPECT_THROW(map.apply(FirTransferMatrix::zero(3, 3)),
               std::invalid_argument);
}

TEST(LinearMap, RestrictColumns) {
  auto id = FirTransferMatrix::identity(4);
  auto map = materialize_map(id, FirTransferMatrix::identity(1), 0,
                             TapSpec{1, 0});
  ASSERT_EQ(map.mat.cols(), 4);
  std::vector<std::vector<Eigen::Index>> all = {{0, 1, 2, 3}};
  auto full = restrict_map(map, all);
  EXPECT_TRUE((full.mat - map.mat).isZero(0.0));
  auto empty = restrict_map(map, {});
  EXPECT_EQ(empty.mat.cols(), 0);
  auto sel = restrict_map(map, {{1}, {3}});
  ASSERT_EQ(sel.mat.cols(), 2);
  EXPECT_DOUBLE_EQ(sel.mat(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(sel.mat(3, 1), 1.0);
  EXPECT_THROW(restrict_map(map, {{7}}), std::invalid_argument);
}

namespace {

SparsityMask random_row_sparse(std::mt19937_64& rng, int n) {
  std::bernoulli_distribution coin(0.5);
  BoolMatrix pat = BoolMatrix::Constant(n, n, false);
  for (int r = 0; r < n; ++r)
    if (coin(rng)) pat.row(r).setConstant(true);
  return SparsityMask({}, pat);
}

SparsityMask random_support(std::mt19937_64& rng, int n, int taps) {
  std::bernoulli_distribution coin(0.4);
  std::vector<BoolMatrix> per;
  for (int k = 0; k < taps; ++k) {
    BoolMatrix p = BoolMatrix::Constant(n, n, false);
    for (int i = 0; i < n; ++i) {
      p(i, i) = true;
      for (int j = 0; j < n; ++j)
        if (coin(rng)) p(i, j) = true;
    }
    per.push_back(p);
  }
  BoolMatrix tail = per.back();
  return SparsityMask(std::move(per), std::move(tail));
}

SparsityMask transpose_mask(const SparsityMask& m) {
  std::vector<BoolMatrix> per;
  for (const auto& p : m.per_tap) per.push_back(p.transpose());
  return SparsityMask(std::move(per), m.tail.transpose());
}

}  // namespace

TEST(Qi, RowAndColumnSparsePatternsAlwaysHold) {
  std::mt19937_64 rng(16);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 4);
    auto p22 = random_support(rng, n, 3);
    auto rows = random_row_sparse(rng, n);
    EXPECT_TRUE(is_quadratically_invariant(rows, p22, 2 * n));
    EXPECT_TRUE(is_quadratically_invariant(transpose_mask(rows), p22, 2 * n));
    // row + column sparsity: intersection of the two patterns
    auto cols = transpose_mask(random_row_sparse(rng, n));
    BoolMatrix both = rows.tail.cwiseProduct(cols.tail);
    EXPECT_TRUE(
        is_quadratically_invariant(SparsityMask({}, both), p22, 2 * n));
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(Qi, WholeSpaceIsInvariant) {
  std::mt19937_64 rng(17);
  auto p22 = random_support(rng, 4, 3);
  EXPECT_TRUE(
      is_quadratically_invariant(SparsityMask::all_true(4, 4), p22, 8));
}

TEST(Qi, ThreeChainSubspace) {
  // delay-structured subspace of the three-player chain: diagonal at tap 1,
  // physical neighbours at tap 2, everything from tap 3 on
  BoolMatrix diag = BoolMatrix::Identity(3, 3);
  BoolMatrix tridiag = BoolMatrix::Constant(3, 3, true);
  tridiag(0, 2) = tridiag(2, 0) = false;
  BoolMatrix full = BoolMatrix::Constant(3, 3, true);
  BoolMatrix empty = BoolMatrix::Constant(3, 3, false);
  SparsityMask chain_s({empty, diag, tridiag}, full);
  // P22 lives in the same subspace
  EXPECT_TRUE(is_quadratically_invariant(chain_s, chain_s, 6));
  // a strictly tighter pattern without the tap-2 neighbours fails
  SparsityMask tight({empty, diag, diag}, diag);
  EXPECT_FALSE(is_quadratically_invariant(tight, chain_s, 6));
}

TEST(Qi, DepthValidation) {
  auto m = SparsityMask::all_true(2, 2);
  EXPECT_THROW(is_quadratically_invariant(m, SparsityMask::all_true(3, 3), 2),
               std::invalid_argument);
  EXPECT_THROW(is_quadratically_invariant(m, m, 0), std::invalid_argument);
}
