#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fraclab/mittag_leffler.hpp"

using namespace fraclab;

namespace {

constexpr double e = std::numbers::e;

void expect_close(cplx a, cplx b, double tol) { EXPECT_LE(std::abs(a - b), tol) << a << " vs " << b; }

} // namespace

TEST(MittagLeffler, SeriesExamples) {
  expect_close(ml_series({0.5, 1.0, 0.0}), 1.0, 1e-15);
  expect_close(ml_series({1.0, 1.0, 1.0}), e, 1e-13);
  expect_close(ml_series({1.0, 2.0, 1.0}), e - 1.0, 1e-13);
  EXPECT_THROW(ml_series({0.5, 1.0, {0.0, 100.0}}), DomainError);
}

TEST(MittagLeffler, ExponentialCase) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int i = 0; i < 50; ++i) {
    const cplx z{u(rng), u(rng)};
    const cplx ref = std::exp(z);
    EXPECT_LT(std::abs(ml_eval(1.0, 1.0, z) - ref), 1e-10 * std::abs(ref)) << z;
  }
  expect_close(ml_eval(1.0, 1.0, {0.0, 10.0}), std::polar(1.0, 10.0), 1e-9);
}

TEST(MittagLeffler, ValueAtZero) {
  for (double a : {0.2, 0.5, 0.9})
    for (double b : {0.3, 1.0, 1.5}) expect_close(ml_eval(a, b, 0.0), 1.0 / std::tgamma(b), 1e-15);
}

TEST(MittagLeffler, IntegralMatchesSeries) {
  const MLQuery q{0.75, 1.0, -1.0};
  expect_close(ml_integral(q), ml_series(q), 1e-8);
  const MLQuery r{0.3, 0.3, {0.7, 0.9}};
  expect_close(ml_integral(r), ml_series(r), 1e-8);
}

TEST(MittagLeffler, IntegralMatchesContourBeyondSeriesRadius) {
  const MLQuery q{0.4, 0.4, {0.0, -5.0}};
  expect_close(ml_integral(q), ml_contour(q), 1e-8);
}

TEST(MittagLeffler, IntegralExponentialBranchOnImaginaryAxis) {
  const double alpha = 0.6, t = 2.0, lambda = 1.0;
  const MLQuery q{alpha, 1.0, {0.0, -std::pow(t, alpha) * lambda}};
  EXPECT_LT(std::abs(std::arg(q.z)), alpha * std::numbers::pi);
  expect_close(ml_integral(q), ml_imaginary_axis(alpha, t, lambda, MLKind::E11), 1e-8);
}

TEST(MittagLeffler, ImaginaryAxisExamples) {
  for (double alpha : {0.3, 0.8}) {
    expect_close(ml_imaginary_axis(alpha, 1.0, 1.0, MLKind::E11), ml_series({alpha, 1.0, {0.0, -1.0}}), 1e-8);
    expect_close(ml_imaginary_axis(alpha, 1.0, 1.0, MLKind::Eaa), ml_series({alpha, alpha, {0.0, -1.0}}), 1e-8);
  }
  expect_close(ml_imaginary_axis(0.4, 0.0, 3.0, MLKind::E11), 1.0, 0.0);
  expect_close(ml_imaginary_axis(0.4, 1e-300, 3.0, MLKind::E11), 1.0, 1e-12);
}

TEST(MittagLeffler, ImaginaryAxisMatchesContourAtLargeArgument) {
  for (double alpha : {0.25, 0.45, 0.7, 0.95})
    for (double y : {20.0, 300.0}) {
      const cplx ref = ml_contour({alpha, 1.0, {0.0, -y}});
      expect_close(ml_imaginary_axis(alpha, 1.0, y, MLKind::E11), ref, 1e-9 * std::max(1.0, std::abs(ref)));
    }
}

TEST(MittagLeffler, NearHalfDispatchesToContour) {
  EXPECT_THROW(ml_imaginary_axis(0.5, 1.0, 1.0, MLKind::E11), SingularQuadratureError);
  EXPECT_THROW(ml_imaginary_axis(0.5005, 1.0, 10.0, MLKind::E11), SingularQuadratureError);
  const MLQuery near{0.5005, 1.0, {0.0, -10.0}};
  expect_close(ml_eval(near), ml_contour(near), 1e-12);
  const MLQuery q{0.5, 1.0, {0.0, -100.0}};
  const cplx v = ml_eval(q);
  EXPECT_TRUE(std::isfinite(v.real()) && std::isfinite(v.imag()));
  EXPECT_LT(std::abs(v), 1.0);
  expect_close(v, ml_contour(q), 1e-9);
}

TEST(MittagLeffler, ConjugateSymmetry) {
  for (double alpha : {0.3, 0.5, 0.8})
    for (cplx z : {cplx{1.0, 2.0}, cplx{-3.0, 0.5}, cplx{0.0, 40.0}, cplx{-20.0, -7.0}}) {
      const cplx a = ml_eval(alpha, 1.0, z), b = ml_eval(alpha, 1.0, std::conj(z));
      EXPECT_LT(std::abs(a - std::conj(b)), 1e-12 * std::max(1.0, std::abs(a))) << alpha << " " << z;
    }
}

TEST(MittagLeffler, BoundedOnImaginaryAxis) {
  for (double alpha : {0.2, 0.5, 0.9}) {
    double sup = 0.0;
    for (double y = 1.0; y <= 1e4; y *= 1.5) sup = std::max(sup, std::abs(ml_eval(alpha, 1.0, {0.0, -y})));
    EXPECT_LT(sup, 2.0) << alpha;
  }
}

TEST(MittagLeffler, BranchesAgreeOnOverlap) {
  for (double alpha : {0.35, 0.65, 0.9})
    for (double beta : {alpha, 1.0})
      for (double theta : {0.1, 0.3, 0.8, 0.95}) {
        const cplx z = std::polar(0.9 * series_radius(alpha), theta * std::numbers::pi);
        if (std::abs(theta - alpha) < 0.05) continue;
        const MLQuery q{alpha, beta, z};
        const cplx s = ml_series(q);
        expect_close(ml_integral(q), s, 1e-9 * std::max(1.0, std::abs(s)));
        expect_close(ml_contour(q), s, 1e-9 * std::max(1.0, std::abs(s)));
      }
}

TEST(MittagLeffler, LaplaceExamples) {
  EXPECT_LT(laplace_identity_residual(1.0, 1.0, 1.0, 2.0), 1e-8);
  EXPECT_LT(laplace_identity_residual(0.5, 1.0, 1.0, 3.0), 1e-6);
  EXPECT_LT(laplace_identity_residual(0.7, 0.7, {0.0, 1.0}, 4.0), 1e-6);
  EXPECT_THROW(laplace_identity_residual(0.5, 1.0, 1.0, -1.0), DomainError);
}

TEST(MittagLeffler, DomainChecks) {
  EXPECT_THROW(ml_eval(0.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(ml_integral({0.5, 1.6, 1.0}), DomainError);
  EXPECT_THROW(ml_integral({0.5, 1.0, 0.0}), DomainError);
  EXPECT_THROW(ml_imaginary_axis(0.5, -1.0, 1.0, MLKind::E11), DomainError);
}

TEST(MittagLeffler, GradedMesh) {
  const auto t = graded_mesh(2.0, 4, 2.0);
  ASSERT_EQ(t.size(), 5u);
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_EQ(t.back(), 2.0);
  EXPECT_DOUBLE_EQ(t[2], 0.5);
  EXPECT_THROW(graded_mesh(1.0, 4, 0.5), DomainError);
}

TEST(MittagLeffler, CaputoOfPowerIsExactForLinear) {
  // L1 is exact for piecewise-linear f; D^a t = t^{1-a} / Gamma(2-a).
  const double alpha = 0.4;
  const auto t = graded_mesh(1.0, 32, 1.5);
  std::vector<cplx> f(t.begin(), t.end());
  const auto d = caputo_l1(alpha, t, f);
  for (std::size_t n = 1; n < t.size(); ++n)
    EXPECT_NEAR(d[n].real(), std::pow(t[n], 1.0 - alpha) / std::tgamma(2.0 - alpha), 1e-12);
}

TEST(MittagLeffler, CaputoResidualZeroForConstant) {
  const auto t = graded_mesh(1.0, 64, 2.0);
  EXPECT_EQ(caputo_mode_residual(0.5, 0.0, t), 0.0);
}

TEST(MittagLeffler, CaputoResidualDecreasesAwayFromOrigin) {
  auto res = [](double alpha, double lambda, int steps) {
    return caputo_mode_residual(alpha, lambda, graded_mesh(1.0, steps, 1.0), 0.5);
  };
  const double r128 = res(0.9, 4.0, 128), r512 = res(0.9, 4.0, 512);
  EXPECT_GT(r128 / r512, 2.0);
  const double a = res(0.5, 1.0, 64), b = res(0.5, 1.0, 256);
  EXPECT_GT(a / b, 2.0);
  EXPECT_LT(b, 1e-2);
}
