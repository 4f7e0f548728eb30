#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "rfd/builtin.hpp"
#include "rfd/certify.hpp"

using namespace rfd;

namespace {

GeneralizedPlant decoupled_plant(int n) {
  GeneralizedPlant p;
  p.A = Matrix::Zero(n, n);
  p.B2 = Matrix::Identity(n, n);
  p.B1 = Matrix::Identity(n, n);
  p.rho_u = 0.0;
  p.rho_w = 0.0;
  p.C1 = Matrix::Identity(n, n);
  p.C2 = Matrix::Identity(n, n);
  p.D12 = Matrix::Zero(n, n);
  p.D21 = Matrix::Zero(n, n);
  return p;
}

GeneralizedPlant banded_plant(std::mt19937_64& rng, int n, double radius,
                              const std::vector<int>& strong) {
  std::normal_distribution<double> dist;
  GeneralizedPlant p;
  p.A = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    p.A(i, i) = dist(rng);
    if (i + 1 < n) p.A(i + 1, i) = dist(rng);
  }
  p.A *= radius / spectral_radius(p.A);
  p.B2 = Matrix::Identity(n, n);
  p.B1 = 0.05 * Matrix::Identity(n, n);
  for (int s : strong) p.B1(s, s) = 1.0 + 0.2 * std::abs(dist(rng));
  p.rho_u = 0.1;
  p.rho_w = 0.0;
  p.C1 = Matrix::Zero(2 * n, n);
  p.C1.topRows(n) = Matrix::Identity(n, n);
  p.D12 = Matrix::Zero(2 * n, n);
  p.D12.bottomRows(n) = std::sqrt(p.rho_u) * Matrix::Identity(n, n);
  p.C2 = Matrix::Identity(n, n);
  p.D21 = Matrix::Zero(n, n);
  return p;
}

}  // namespace

TEST(MixingTime, DecoupledActuatorsNeverMix) {
  auto model = ModelMatchingModel::state_feedback(decoupled_plant(4));
  auto mt = mixing_time(model, {0, 2}, TapSpec{1, 0}, 1e-9, 60);
  EXPECT_EQ(mt.tau, 60);
  EXPECT_TRUE(mt.saturated);
}

TEST(MixingTime, ChainValue) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  EXPECT_EQ(mixing_time(model, {0, 4}, TapSpec{1, 0}).tau, 5);
  EXPECT_EQ(mixing_time(model, {0, 4, 8}, TapSpec{1, 0}).tau, 5);
  EXPECT_THROW(mixing_time(model, {}, TapSpec{1, 0}), std::invalid_argument);
}

TEST(Gains, AlphaShiftsWithRho) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto ap = model.assemble(3, TapSpec{1, 0});
  GroupStructure pen = actuator_structure(ap.map.input);
  const double a0 = alpha_exact_small_t(ap.map, pen, {0, 4}, 0.0);
  const double a3 = alpha_exact_small_t(ap.map, pen, {0, 4}, 0.3);
  EXPECT_NEAR(a3, a0 + 0.3, 1e-12);
}

TEST(Gains, OrthonormalGroupGivesUnitGain) {
  auto model = ModelMatchingModel::state_feedback(decoupled_plant(3));
  // t = 2 keeps exactly the first kernel tap: columns are orthonormal
  auto ap = model.assemble(2, TapSpec{1, 0});
  GroupStructure pen = actuator_structure(ap.map.input);
  EXPECT_NEAR(alpha_exact_small_t(ap.map, pen, {1}, 0.25), 1.25, 1e-12);
}

TEST(Gains, GammaSingletonIsSigmaMin) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto ap = model.assemble(4, TapSpec{1, 0});
  GroupStructure pen = actuator_structure(ap.map.input);
  auto grams = detail::group_grams(ap.map, pen);
  EXPECT_NEAR(gamma_lower(grams, {4}), grams.sigma_min[4], 1e-14);
  // below the mixing time the cross terms vanish and gamma reduces to the
  // smallest diagonal sigma_min
  const double g = gamma_lower(grams, {0, 4});
  EXPECT_NEAR(g, std::min(grams.sigma_min[0], grams.sigma_min[4]), 1e-12);
}

TEST(Gains, BetaEdgeCases) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto ap = model.assemble(4, TapSpec{1, 0});
  GroupStructure pen = actuator_structure(ap.map.input);
  auto grams = detail::group_grams(ap.map, pen);
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_DOUBLE_EQ(beta_upper(grams, all, pen.groups.size()), 0.0);

  auto dmodel = ModelMatchingModel::state_feedback(decoupled_plant(4));
  auto dap = dmodel.assemble(3, TapSpec{1, 0});
  GroupStructure dpen = actuator_structure(dap.map.input);
  auto dgrams = detail::group_grams(dap.map, dpen);
  EXPECT_DOUBLE_EQ(beta_upper(dgrams, {0, 2}, dpen.groups.size()), 0.0);
}

TEST(Gains, SubsetEnumerationCap) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto ap = model.assemble(2, TapSpec{1, 0});
  GroupStructure pen = actuator_structure(ap.map.input);
  auto grams = detail::group_grams(ap.map, pen);
  std::vector<int> big(10);
  std::iota(big.begin(), big.end(), 0);
  EXPECT_THROW(gamma_lower(grams, big, 5), EnumerationCapError);
}

TEST(Noise, ZeroResidualGivesZeroNoise) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto ap = model.assemble(3, TapSpec{1, 0});
  GroupStructure pen = actuator_structure(ap.map.input);
  auto zero = FirTransferMatrix::zero(10, 10, 4);
  auto n = rfd_noise(ap.map, pen, {0, 4}, zero, zero);
  EXPECT_DOUBLE_EQ(n.eta, 0.0);
  // v = t removes the tail: eta depends on W alone
  const int t = 4;
  BoolMatrix pat = BoolMatrix::Constant(10, 10, false);
  pat.row(0).setConstant(true);
  pat.row(4).setConstant(true);
  auto u_star = long_horizon_restricted_ls(model, 0.1, SparsityMask({}, pat),
                                           40, 0, 60)
                    .u;
  auto [uv, tail] = truncate_and_tail(u_star, model, t, TapSpec{t, 0});
  EXPECT_TRUE(tail.is_zero(1e-13));
}

TEST(Snr, SentinelsAndZeros) {
  CoordLayout layout{1, 3, 1, 0};
  GroupStructure pen = actuator_structure(layout);
  Vector x(3);
  x << 1.0, 0.0, 2.0;
  auto u = unvectorize(x, layout);
  auto with_noise = snr_values(u, pen, {0, 1}, 0.5);
  EXPECT_DOUBLE_EQ(with_noise[0], 2.0);
  EXPECT_DOUBLE_EQ(with_noise[1], 0.0);
  auto noiseless = snr_values(u, pen, {0, 1}, 0.0);
  EXPECT_TRUE(std::isinf(noiseless[0]));
  EXPECT_DOUBLE_EQ(noiseless[1], 0.0);
}

TEST(Thresholds, VanishingSignalEmptiesTheInterval) {
  auto thr = lambda_thresholds(0.4, 0.2, 1.0, 0.0, 0.5, 2.0, {0.0, 1.0}, 0.0,
                               1.0);
  EXPECT_FALSE(thr.interval.has_value());
  EXPECT_GT(thr.sufficient, 0.0);
}

TEST(Theorem3, NoiselessCertifies) {
  std::vector<double> snr = {std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity()};
  EXPECT_TRUE(theorem3_check(snr, 2.0, 0.5));
  EXPECT_FALSE(theorem3_check(snr, 0.5, 2.0));  // gamma <= beta
  EXPECT_FALSE(theorem3_check({0.5, 3.0}, 2.0, 0.5));  // one group misses
}

TEST(Certificate, NuBoundIdentityHoldsExactly) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  for (int t : {2, 3, 4, 5}) {
    auto cert = build_certificate(model, {0, 4}, t, TapSpec{1, 0}, 0.0);
    EXPECT_DOUBLE_EQ(cert.nu_upper, cert.beta_upper / (0.0 + cert.gamma));
    // snr fields are the group norms of the truncation divided by eta
    Vector uv = vectorize(cert.u_star_v, CoordLayout{1, 10, 10, 0});
    for (size_t i = 0; i < cert.m_star.size(); ++i) {
      double nrm = 0.0;
      for (int c = 0; c < 10; ++c) {
        const double v = uv(c * 10 + cert.m_star[i]);
        nrm += v * v;
      }
      EXPECT_NEAR(cert.snr[i], std::sqrt(nrm) / cert.eta,
                  1e-12 * (1.0 + cert.snr[i]));
    }
  }
}

TEST(Certificate, AlphaMonotoneBelowMixingTime) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto ap_of = [&](int t) { return model.assemble(t, TapSpec{1, 0}); };
  double prev = -1.0;
  for (int t = 1; t <= 5; ++t) {
    auto ap = ap_of(t);
    GroupStructure pen = actuator_structure(ap.map.input);
    const double a = alpha_exact_small_t(ap.map, pen, {0, 4}, 0.0);
    EXPECT_GE(a, prev - 1e-12);
    prev = a;
  }
}

TEST(Certificate, BetaMonotoneInHorizonAndOrder) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  double prev = -1.0;
  for (int t = 2; t <= 6; ++t) {
    auto ap = model.assemble(t, TapSpec{1, 0});
    GroupStructure pen = actuator_structure(ap.map.input);
    auto grams = detail::group_grams(ap.map, pen);
    const double b = beta_upper(grams, {0, 4}, pen.groups.size());
    EXPECT_GE(b, prev - 1e-12);
    prev = b;
  }
  // order sweep at fixed horizon
  prev = -1.0;
  for (int v = 1; v <= 3; ++v) {
    auto ap = model.assemble(6, TapSpec{v, 0});
    GroupStructure pen = actuator_structure(ap.map.input);
    auto grams = detail::group_grams(ap.map, pen);
    const double b = beta_upper(grams, {0, 4}, pen.groups.size());
    EXPECT_GE(b, prev - 1e-12);
    prev = b;
  }
}

TEST(Certificate, OneDimensionalGroupsMatchBruteForceGains) {
  // single-column variable at order one: each group is one scalar
  // coordinate, so the variational gain programs reduce to sign patterns
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 4;
    Matrix a = Matrix::Zero(n, n);
    std::normal_distribution<double> dist;
    for (int i = 0; i < n; ++i) {
      a(i, i) = dist(rng);
      if (i + 1 < n) a(i + 1, i) = dist(rng);
    }
    a *= 0.55 / spectral_radius(a);
    Vector xi = Vector::Ones(n);
    auto model = ModelMatchingModel::basic_lqr(a, Matrix::Identity(n, n),
                                               Matrix::Identity(n, n), xi, 0.0);
    const int t = 3;
    auto ap = model.assemble(t, TapSpec{1, 0});
    GroupStructure pen = actuator_structure(ap.map.input);
    std::vector<int> m_star = {0, 2};
    auto grams = detail::group_grams(ap.map, pen);
    const double gamma = gamma_lower(grams, m_star);
    const double beta = beta_upper(grams, m_star, pen.groups.size());

    // brute force over the extreme points of the dual-norm unit ball
    const Matrix gram_full =
        ap.map.mat.transpose() * ap.map.mat;  // n x n, scalar groups
    double alpha_bf = std::numeric_limits<double>::infinity();
    double beta_bf = 0.0;
    std::vector<char> in_star(n, 0);
    for (int g : m_star) in_star[g] = 1;
    for (int s0 : {-1, 0, 1}) {
      for (int s2 : {-1, 0, 1}) {
        if (std::max(std::abs(s0), std::abs(s2)) != 1) continue;
        Vector delta = Vector::Zero(n);
        delta(0) = s0;
        delta(2) = s2;
        Vector img = gram_full * delta;
        double dual_on = 0.0, dual_off = 0.0;
        for (int g = 0; g < n; ++g) {
          if (in_star[g])
            dual_on = std::max(dual_on, std::abs(img(g)));
          else
            dual_off = std::max(dual_off, std::abs(img(g)));
        }
        alpha_bf = std::min(alpha_bf, dual_on);
        beta_bf = std::max(beta_bf, dual_off);
      }
    }
    EXPECT_NEAR(gamma, alpha_bf, 1e-4 * (1.0 + std::abs(alpha_bf)));
    EXPECT_NEAR(beta, beta_bf, 1e-4 * (1.0 + std::abs(beta_bf)));
  }
}

TEST(Certificate, DecoupledToyIsTriviallyIdentifiable) {
  auto model = ModelMatchingModel::state_feedback(decoupled_plant(4));
  auto cert = build_certificate(model, {0, 2}, 2, TapSpec{1, 0}, 0.0);
  EXPECT_TRUE(cert.tau_saturated);
  EXPECT_DOUBLE_EQ(cert.beta_upper, 0.0);
  EXPECT_DOUBLE_EQ(cert.nu_upper, 0.0);
  EXPECT_TRUE(cert.verdicts.assumption1);
}

TEST(Certificate, CertifiedInstancesRecoverTheirArchitecture) {
  // end-to-end soundness: wherever the verdicts hold and lambda sits inside
  // the interval, the regularized solve returns exactly the architecture
  std::mt19937_64 rng(62);
  int certified = 0, attempted = 0;
  while (certified < 20 && attempted < 200) {
    ++attempted;
    const int n = 5 + static_cast<int>(rng() % 4);
    const int s1 = static_cast<int>(rng() % (n / 2));
    const int s2 = s1 + n / 2;
    auto plant = banded_plant(rng, n, 0.35 + 0.2 * (rng() % 10) / 10.0,
                              {s1, s2});
    auto model = ModelMatchingModel::state_feedback(plant);
    const int t = 2 + static_cast<int>(rng() % 2);
    auto cert = build_certificate(model, {s1, s2}, t, TapSpec{1, 0}, 0.0);
    if (!(cert.verdicts.assumption1 && cert.verdicts.corollary1 &&
          cert.verdicts.theorem3))
      continue;
    ++certified;
    const double lam = 0.5 * (cert.lambda_interval->first +
                              cert.lambda_interval->second);
    auto ap = model.assemble(t, TapSpec{1, 0});
    GroupStructure pen = actuator_structure(ap.map.input);
    RfdProblem p = RfdProblem::from_assembled(std::move(ap), pen, 0.0, lam);
    auto sol = solve_rfd(p);
    EXPECT_TRUE(sol.converged);
    EXPECT_EQ(sol.support, std::vector<int>({s1, s2}));
  }
  EXPECT_GE(certified, 20);
}

TEST(Certificate, DegenerateHorizonProducesFlagsNotCrashes) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto cert = build_certificate(model, {0, 4}, 1, TapSpec{1, 0}, 0.0);
  // at t = 1 the map has no effective columns yet: gains collapse and the
  // certificate reports unidentifiable rather than throwing
  EXPECT_FALSE(cert.verdicts.assumption1);
  EXPECT_FALSE(cert.verdicts.theorem3);
}

TEST(Certificate, SuppliedArchitectureOverridesTheOracle) {
  auto model = ModelMatchingModel::state_feedback(build_chain10());
  auto cert = build_certificate(model, {1, 6}, 4, TapSpec{1, 0}, 0.0);
  EXPECT_EQ(cert.m_star, std::vector<int>({1, 6}));
  // quantities are finite and internally consistent for the candidate
  EXPECT_GT(cert.eta, 0.0);
  EXPECT_EQ(cert.snr.size(), 2u);
}
