#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fraclab/spaces.hpp"

using namespace fraclab;

namespace {

const TorusGrid line(1, 512, 2 * std::numbers::pi);

double max_diff(const SpectralField& a, const SpectralField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

SpectralField band(std::uint64_t seed, const DyadicPartition& part) {
  return make_initial_data(RandomBand{seed, 1.5, part.j_max() + 0.3}, part.grid());
}

SpaceSpec besov(double s, double p, double q, bool hom = false,
                BernsteinFunction phi = BernsteinFunction::power(1.0)) {
  return {SpaceKind::besov, s, p, q, hom, phi};
}

SpaceSpec triebel(double s, double p, double q, bool hom = false,
                  BernsteinFunction phi = BernsteinFunction::power(1.0)) {
  return {SpaceKind::triebel, s, p, q, hom, phi};
}

constexpr double inf = std::numeric_limits<double>::infinity();

} // namespace

TEST(Spaces, ResolvedRange) {
  const DyadicPartition part(line);
  EXPECT_EQ(part.j_max(), 7);
  EXPECT_EQ(part.j_min(true), 1);
  EXPECT_EQ(part.j_min(false), 1);
  EXPECT_NO_THROW(part.require_resolution(true));
  const DyadicPartition coarse(TorusGrid(1, 64, 2 * std::numbers::pi));
  EXPECT_THROW(coarse.require_resolution(false), RangeError);
  EXPECT_THROW(besov_norm(SpectralField::zeros(coarse.grid()), besov(0, 2, 2), coarse), RangeError);
}

TEST(Spaces, PartitionOfUnityAndSupport) {
  for (double rho = -3.0; rho <= 9.0; rho += 0.01) {
    const double r = std::exp2(rho);
    double sum = DyadicPartition::chi(r);
    for (int j = 1; j <= 12; ++j) {
      const double v = DyadicPartition::psi(j, r);
      if (r <= std::exp2(j - 1) || r >= std::exp2(j + 1)) ASSERT_EQ(v, 0.0);
      ASSERT_GE(v, 0.0);
      sum += v;
    }
    ASSERT_NEAR(sum, 1.0, 1e-12) << rho;
  }
}

TEST(Spaces, ReconstructionFromBlocks) {
  const DyadicPartition part(line);
  const auto f = make_initial_data(RandomBand{5, -inf, part.j_max() + 0.3}, line);
  auto sum = low_pass(f);
  for (int j = 1; j <= part.j_max(); ++j) sum = sum + lp_block(f, j, part);
  EXPECT_LT(max_diff(sum, f), 1e-10);
  EXPECT_THROW(lp_block(f, part.j_max() + 1, part), RangeError);
}

TEST(Spaces, DisjointBlocksVanish) {
  const DyadicPartition part(line);
  const auto f = make_initial_data(Annular{4.0, 0.1}, line);
  for (int j : {2, 6}) EXPECT_EQ(lp_norm(lp_block(f, j, part), 2.0), 0.0);
  EXPECT_EQ(lp_norm(lp_block(SpectralField::zeros(line), 3, part), 2.0), 0.0);
}

TEST(Spaces, ZeroAndHomogeneity) {
  const DyadicPartition part(line);
  const auto f = band(1, part);
  for (const auto& sp : {besov(0.5, 3, 2), triebel(1, 2, inf), besov(-0.5, 4, 1, true)}) {
    EXPECT_EQ(space_norm(SpectralField::zeros(line), sp, part), 0.0);
    const double n1 = space_norm(f, sp, part), n2 = space_norm(f.scaled({0.0, -3.0}), sp, part);
    EXPECT_NEAR(n2, 3.0 * n1, 1e-12 * n2);
  }
}

TEST(Spaces, SingleShellBesov) {
  const DyadicPartition part(line);
  const auto f = make_initial_data(Annular{3.0, 0.1}, line);
  const auto phi = BernsteinFunction::power(0.5);
  const double s = 1.5, p = 3.0;
  const double expected = std::pow(phi(std::exp2(6.0)), s / 2) * lp_norm(lp_block(f, 3, part), p);
  const double got = besov_norm(f, besov(s, p, inf, true, phi), part);
  EXPECT_NEAR(got, expected, 0.05 * expected);
  const double tl = triebel_norm(f, triebel(s, p, 2, true, phi), part);
  EXPECT_NEAR(tl, got, 0.05 * got);
}

TEST(Spaces, SquareFunctionMatchesL2) {
  const DyadicPartition part(line);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto f = band(seed, part);
    const double l2 = lp_norm(f, 2.0);
    EXPECT_NEAR(triebel_norm(f, triebel(0, 2, 2), part), l2, 0.03 * l2) << seed;
  }
}

TEST(Spaces, PowerOneGivesClassicalWeights) {
  const auto sp = besov(0.7, 2, 2);
  for (int j = 1; j < 10; ++j) EXPECT_NEAR(detail::block_weight(sp, j), std::exp2(0.7 * j), 1e-12 * std::exp2(0.7 * j));
}

TEST(Spaces, BesselPotential) {
  const auto phi = BernsteinFunction::power(0.5);
  const DyadicPartition part(line);
  const auto f = band(2, part);
  EXPECT_EQ(max_diff(bessel_potential(f, 0.0, phi), f), 0.0);
  EXPECT_LT(max_diff(bessel_potential(bessel_potential(f, 1.3, phi), -1.3, phi), f), 1e-12 * lp_norm(f, inf) * 10);

  std::vector<cplx> c(line.size());
  c[5] = 1.0;
  const auto wave = SpectralField::from_coefficients(line, c);
  const auto lifted = bessel_potential(wave, 2.0, phi);
  EXPECT_NEAR(std::abs(lifted.coefficients()[5]), 1.0 + phi(25.0), 1e-12);
}

TEST(Spaces, SobolevNorm) {
  const auto phi = BernsteinFunction::power(1.0);
  const DyadicPartition part(line);
  const auto f = band(3, part);
  EXPECT_EQ(sobolev_phi_norm(f, 0.0, 3.0, phi), lp_norm(f, 3.0));
  EXPECT_EQ(sobolev_phi_norm(SpectralField::zeros(line), 1.0, 2.0, phi), 0.0);
  double lo = inf, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = band(seed, part);
    const double r = sobolev_phi_norm(g, 1.0, 2.0, phi) / triebel_norm(g, triebel(1, 2, 2), part);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  EXPECT_LT(hi / lo, 1.1);
}

TEST(Spaces, EmbeddingRatios) {
  const DyadicPartition part(line);
  const auto phi = BernsteinFunction::power(0.5);
  const auto src = besov(1.0, 2.0, 2.0, false, phi), dst = besov(0.5, 4.0, 2.0, false, phi);
  EXPECT_EQ(check_embedding(SpectralField::zeros(line), src, dst, part), 0.0);
  const auto f = band(0, part);
  EXPECT_DOUBLE_EQ(check_embedding(f, src, src, part), 1.0);
  double cal = 0.0, val = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) cal = std::max(cal, check_embedding(band(seed, part), src, dst, part));
  for (std::uint64_t seed = 100; seed < 120; ++seed) val = std::max(val, check_embedding(band(seed, part), src, dst, part));
  EXPECT_TRUE(std::isfinite(cal));
  EXPECT_LE(val, 1.2 * cal);
}

TEST(Spaces, EmbeddingRelationEnforced) {
  const DyadicPartition part(line);
  const auto f = band(0, part);
  EXPECT_THROW(check_embedding(f, besov(1, 2, 2), besov(0.9, 4, 2), part), ConstraintError);
  EXPECT_THROW(check_embedding(f, besov(0.25, 4, 2), besov(0.5, 2, 2), part), ConstraintError);
  EXPECT_THROW(check_embedding(f, besov(1, 2, 4), besov(0.75, 4, 2), part), ConstraintError);
  EXPECT_THROW(check_embedding(f, besov(1, 2, 2), triebel(0.75, 4, 2), part), ConstraintError);
}

TEST(Spaces, GagliardoNirenberg) {
  const DyadicPartition part(line);
  const auto target = triebel(1, 2, 2), e0 = triebel(0, 2, inf), e1 = triebel(2, 2, inf);
  EXPECT_THROW(check_gn(band(0, part), target, e0, e1, 1.0, part), ConstraintError);
  EXPECT_THROW(check_gn(band(0, part), target, e0, e1, 0.0, part), ConstraintError);
  EXPECT_THROW(check_gn(band(0, part), target, e0, e1, 0.3, part), ConstraintError);
  EXPECT_THROW(check_gn(band(0, part), target, e0, e0, 0.5, part), ConstraintError);
  EXPECT_THROW(check_gn(band(0, part), target, e0, triebel(2, 2, 2), 0.5, part), ConstraintError);

  const auto shell = make_initial_data(Annular{4.0, 0.2}, line);
  const double r = check_gn(shell, target, e0, e1, 0.5, part);
  EXPECT_TRUE(std::isfinite(r));
  EXPECT_GT(r, 0.0);
  EXPECT_NEAR(check_gn(shell.scaled(7.0), target, e0, e1, 0.5, part), r, 1e-12 * r);
}
