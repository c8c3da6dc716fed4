#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "fraclab/bernstein.hpp"
#include "fraclab/grid.hpp"

using namespace fraclab;

namespace {

double max_diff(std::span<const cplx> a, std::span<const cplx> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

SpectralField random_field(const TorusGrid& g, std::uint64_t seed) {
  detail::NormalStream rng(seed);
  std::vector<cplx> v(g.size());
  for (auto& x : v) {
    const double re = rng.next();
    x = {re, rng.next()};
  }
  return {g, std::move(v)};
}

SpectralField plane_wave(const TorusGrid& g, std::array<int, 3> k) {
  std::vector<cplx> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto pos = g.unflatten(i);
    double ph = 0.0;
    for (int a = 0; a < g.d(); ++a) ph += g.dxi() * k[a] * g.coordinate(pos[a]);
    v[i] = std::polar(1.0, ph);
  }
  return {g, std::move(v)};
}

} // namespace

TEST(Grid, RejectsBadShapes) {
  EXPECT_THROW(TorusGrid(4, 16, 1.0), ShapeError);
  EXPECT_THROW(TorusGrid(1, 24, 1.0), ShapeError);
  EXPECT_THROW(TorusGrid(1, 8, 1.0), ShapeError);
  EXPECT_THROW(TorusGrid(1, 16, 0.0), ShapeError);
  const TorusGrid g(1, 16, 1.0);
  EXPECT_THROW(SpectralField(g, std::vector<cplx>(15)), ShapeError);
  EXPECT_THROW(to_physical(std::vector<cplx>(17), g), ShapeError);
}

TEST(Grid, ConstantHasOnlyZeroMode) {
  const TorusGrid g(2, 16, 2 * std::numbers::pi);
  const SpectralField f(g, std::vector<cplx>(g.size(), 1.0));
  const auto c = f.coefficients();
  EXPECT_NEAR(std::abs(c[0]), 16.0, 1e-12);
  for (std::size_t i = 1; i < c.size(); ++i) ASSERT_LT(std::abs(c[i]), 1e-12);
}

TEST(Grid, PlaneWaveHasSingleCoefficient) {
  const TorusGrid g(2, 32, 7.0);
  const auto f = plane_wave(g, {1, 0, 0});
  const auto c = f.coefficients();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto pos = g.unflatten(i);
    const bool target = g.wavenumber(pos[0]) == 1 && pos[1] == 0;
    if (target)
      EXPECT_NEAR(std::abs(c[i]), 32.0, 1e-10);
    else
      ASSERT_LT(std::abs(c[i]), 1e-10);
  }
}

TEST(Grid, RoundTrip) {
  for (int d = 1; d <= 3; ++d) {
    const TorusGrid g(d, 16, 3.0);
    const auto f = random_field(g, 7 + d);
    const auto back = to_physical(to_frequency(f), g);
    EXPECT_LT(max_diff(back.values(), f.values()), 1e-12);
  }
}

TEST(Grid, Parseval) {
  const TorusGrid g(2, 32, 5.0);
  const auto f = random_field(g, 3);
  double phys = 0.0, freq = 0.0;
  for (const auto& v : f.values()) phys += std::norm(v);
  for (const auto& v : f.coefficients()) freq += std::norm(v);
  EXPECT_NEAR(phys * g.cell(), g.cell() * freq, 1e-12 * phys * g.cell());
  EXPECT_NEAR(lp_norm(f, 2.0), std::sqrt(g.cell() * freq), 1e-12 * lp_norm(f, 2.0));
}

TEST(Grid, IdentityMultiplier) {
  const TorusGrid g(1, 64, 10.0);
  const auto f = random_field(g, 11);
  const auto h = apply_multiplier(f, [](const std::array<double, 3>&) { return cplx{1.0}; });
  EXPECT_LT(max_diff(h.values(), f.values()), 1e-12);
}

TEST(Grid, LaplacianEigenfunction) {
  const TorusGrid g(2, 32, 2 * std::numbers::pi);
  const auto phi = BernsteinFunction::power(1.0);
  const auto f = plane_wave(g, {2, -3, 0});
  const auto h = apply_multiplier(f, [&](const std::array<double, 3>& xi) {
    const double r2 = xi[0] * xi[0] + xi[1] * xi[1];
    return cplx{r2 > 0 ? -phi(r2) : 0.0};
  });
  EXPECT_LT(max_diff(h.values(), f.scaled(-13.0).values()), 1e-10);
}

TEST(Grid, InversePairMultiplier) {
  const TorusGrid g(2, 32, 9.0);
  const auto phi = BernsteinFunction::power(0.5);
  const auto f = random_field(g, 5);
  const auto a = apply_radial(f, [&](double r) { return cplx{1.0 / (1.0 + (r > 0 ? phi(r * r) : 0.0))}; });
  const auto b = apply_radial(a, [&](double r) { return cplx{1.0 + (r > 0 ? phi(r * r) : 0.0)}; });
  EXPECT_LT(max_diff(b.values(), f.values()), 1e-12 * 10);
}

TEST(Grid, MultipliersCompose) {
  const TorusGrid g(1, 128, 12.0);
  const auto f = random_field(g, 9);
  auto m1 = [](double r) { return cplx{std::exp(-r), r}; };
  auto m2 = [](double r) { return cplx{1.0 / (1.0 + r * r), 0.5}; };
  const auto seq = apply_radial(apply_radial(f, m1), m2);
  const auto once = apply_radial(f, [&](double r) { return m1(r) * m2(r); });
  EXPECT_LT(max_diff(seq.values(), once.values()), 1e-12);
}

TEST(Grid, NonFiniteSymbolNamesFrequency) {
  const TorusGrid g(1, 16, 2 * std::numbers::pi);
  const auto f = random_field(g, 1);
  try {
    apply_multiplier(f, [](const std::array<double, 3>& xi) { return cplx{1.0 / xi[0]}; });
    FAIL() << "expected SymbolError";
  } catch (const SymbolError& e) {
    EXPECT_NE(std::string(e.what()).find("xi = (0)"), std::string::npos);
  }
  EXPECT_NO_THROW(apply_multiplier(f, [](const std::array<double, 3>& xi) { return cplx{1.0 / xi[0]}; }, 0.0));
}

TEST(Grid, LpNormExamples) {
  const TorusGrid g(2, 16, 3.0);
  EXPECT_NEAR(lp_norm(SpectralField(g, std::vector<cplx>(g.size(), 1.0)), 2.0), 3.0, 1e-12);
  EXPECT_EQ(lp_norm(SpectralField::zeros(g), 3.0), 0.0);
  EXPECT_THROW(lp_norm(SpectralField::zeros(g), 0.5), DomainError);
  const TorusGrid line(1, 256, 40.0);
  const auto gauss = make_initial_data(Gaussian{1.0}, line);
  EXPECT_NEAR(lp_norm(gauss, 2.0), std::pow(std::numbers::pi, 0.25), 1e-12);
  EXPECT_NEAR(lp_norm(gauss, std::numeric_limits<double>::infinity()), 1.0, 1e-12);
}

TEST(Grid, GaussianIsSymmetricRealPositive) {
  const TorusGrid g(2, 32, 16.0);
  const auto f = make_initial_data(Gaussian{1.0}, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto pos = g.unflatten(i);
    ASSERT_GT(f.values()[i].real(), 0.0);
    ASSERT_EQ(f.values()[i].imag(), 0.0);
    if (pos[0] > 0 && pos[1] > 0) {
      const std::size_t mirror = static_cast<std::size_t>(32 - pos[0]) * 32 + (32 - pos[1]);
      ASSERT_NEAR(f.values()[i].real(), f.values()[mirror].real(), 1e-15);
    }
  }
}

TEST(Grid, AnnularSupportIsShell) {
  const TorusGrid g(2, 64, 2 * std::numbers::pi);
  const Annular a{3.0, 0.1};
  const auto f = make_initial_data(a, g);
  const auto& ksq = g.k_squared();
  int active = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = g.dxi() * std::sqrt(static_cast<double>(ksq[i]));
    const bool inside = ksq[i] > 0 && r > std::exp2(a.j0 - a.eps) && r < std::exp2(a.j0 + a.eps);
    if (!inside)
      ASSERT_EQ(f.coefficients()[i], cplx{}) << i;
    else
      active += std::abs(f.coefficients()[i]) > 0;
  }
  EXPECT_GT(active, 0);
  EXPECT_THROW(make_initial_data(Annular{8.0, 0.1}, g), RangeError);
}

TEST(Grid, RandomBandIsDeterministic) {
  const TorusGrid g(2, 32, 2 * std::numbers::pi);
  const RandomBand k{42, 1.0, 3.0};
  const auto a = make_initial_data(k, g), b = make_initial_data(k, g);
  EXPECT_EQ(max_diff(a.values(), b.values()), 0.0);
  const auto c = make_initial_data(RandomBand{43, 1.0, 3.0}, g);
  EXPECT_GT(max_diff(a.values(), c.values()), 0.0);
}
