#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fraclab/operators.hpp"

using namespace fraclab;

namespace {

const TorusGrid line(1, 256, 16 * std::numbers::pi);

SpectralField sample(std::uint64_t seed = 1) { return make_initial_data(RandomBand{seed, -INFINITY, 3.0}, line); }

} // namespace

TEST(Operators, SAtZeroTimeIsIdentity) {
  const auto f = sample();
  const auto g = apply_S(f, {0.5, BernsteinFunction::power(1.0), 0.0});
  for (std::size_t i = 0; i < line.size(); ++i) ASSERT_EQ(g.values()[i], f.values()[i]);
}

TEST(Operators, ZeroModeInvariantUnderS) {
  const auto f = sample();
  for (double t : {0.1, 1.0, 50.0}) {
    const auto g = apply_S(f, {0.6, BernsteinFunction::power(0.5), t});
    EXPECT_LT(std::abs(g.coefficients()[0] - f.coefficients()[0]), 1e-12) << t;
  }
}

TEST(Operators, UnitaryAtAlphaOne) {
  const auto f = sample(4);
  const auto phi = BernsteinFunction::power(1.0);
  const double t = 0.7;
  const auto g = apply_S(f, {1.0, phi, t});
  EXPECT_NEAR(lp_norm(g, 2.0), lp_norm(f, 2.0), 1e-10);
  for (std::size_t i = 1; i < 8; ++i) {
    const double xi = line.dxi() * line.wavenumber(static_cast<int>(i));
    const cplx expect = std::polar(1.0, -t * phi(xi * xi)) * f.coefficients()[i];
    EXPECT_LT(std::abs(g.coefficients()[i] - expect), 1e-10);
  }
}

TEST(Operators, WeightedPZeroMode) {
  const auto f = sample();
  const double alpha = 0.4, t = 2.5;
  const auto g = apply_P_weighted(f, {alpha, BernsteinFunction::power(1.0), t});
  const cplx expect = f.coefficients()[0] * std::pow(t, alpha - 1.0) / std::tgamma(alpha);
  EXPECT_LT(std::abs(g.coefficients()[0] - expect), 1e-12);
  EXPECT_THROW(apply_P_weighted(f, {alpha, BernsteinFunction::power(1.0), 0.0}), DomainError);
}

TEST(Operators, WeightedPReducesToSAtAlphaOne) {
  const auto f = sample(2);
  const PropagatorQuery q{1.0, BernsteinFunction::power(0.5), 1.3};
  const auto a = apply_P_weighted(f, q), b = apply_S(f, q);
  for (std::size_t i = 0; i < line.size(); ++i) ASSERT_LT(std::abs(a.values()[i] - b.values()[i]), 1e-10);
}

TEST(Operators, WeightedPIsTimeDerivative) {
  const double alpha = 0.6, lambda = 1.0;
  auto integral = [&](double t) {
    return std::pow(t, alpha) * ml_eval(MLQuery{alpha, alpha + 1.0, {0.0, -lambda * std::pow(t, alpha)}});
  };
  for (double t : {0.5, 1.3, 4.0}) {
    const double h = 1e-4 * t;
    const cplx fd = (integral(t + h) - integral(t - h)) / (2.0 * h);
    const cplx exact = std::pow(t, alpha - 1.0) * ml_symbol(OperatorKind::P, alpha, lambda * std::pow(t, alpha));
    EXPECT_LT(std::abs(fd - exact), 1e-4) << t;
  }
}

TEST(Operators, QueryValidation) {
  const auto f = sample();
  EXPECT_THROW(apply_S(f, {0.5, BernsteinFunction::power(1.0), -1.0}), DomainError);
  EXPECT_THROW(apply_S(f, {1.5, BernsteinFunction::power(1.0), 1.0}), DomainError);
  PropagatorQuery q{0.5, BernsteinFunction::power(1.0), 1.0, 3.0};
  EXPECT_THROW(validate(q, OperatorKind::S), DomainError);
  EXPECT_NO_THROW(validate(q, OperatorKind::P));
  q.sigma = 4.5;
  EXPECT_THROW(validate(q, OperatorKind::P), DomainError);
}

TEST(Operators, AdmissibleTriples) {
  EXPECT_DOUBLE_EQ(admissible_q(2.0, 4.0, 1, 1.0), 8.0);
  EXPECT_TRUE(std::isinf(admissible_q(3.0, 3.0, 2, 0.5)));
  EXPECT_NEAR(admissible_q(2.0, 3.0, 2, 0.5), 3.0, 1e-12);
  EXPECT_THROW(admissible_q(2.0, 4.0, 2, 0.5), ConstraintError);
  EXPECT_THROW(admissible_q(3.0, 2.0, 1, 1.0), ConstraintError);
  EXPECT_THROW(admissible_q(1.0, 2.0, 1, 1.0), ConstraintError);
  EXPECT_THROW(admissible_q(2.0, 3.0, 1, 1.5), DomainError);
  const auto tr = make_admissible(2.0, 5.0, 3, 1.0);
  EXPECT_NEAR(1.0 / tr.q, (3.0 / 2.0 - 3.0 / 5.0) / 2.0, 1e-15);
}

TEST(Operators, LoglogSlope) {
  std::vector<double> x{1, 2, 4, 8}, y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -0.37));
  EXPECT_NEAR(loglog_slope(x, y), -0.37, 1e-14);
}

TEST(Operators, DecaySlopeTheory) {
  DecaySpec s;
  s.alpha = 0.5;
  s.p = 2.0;
  s.norm = LpTarget{4.0};
  EXPECT_NEAR(decay_slope_theory(s, 1), -(0.5 / 2.0) * 0.25, 1e-15);
  s.kind = OperatorKind::P;
  EXPECT_NEAR(decay_slope_theory(s, 1), -(0.5 / 2.0) * 0.25 - 0.5, 1e-15);
}

TEST(Operators, DecayConstraintsEnforced) {
  const auto setup = decay_setup(0.5, 1.0, 1.0, 10.0);
  DecaySpec s;
  s.p = 2.0;
  s.norm = LpTarget{1.5};
  const auto t = log_times(1.0, 10.0, 4);
  EXPECT_THROW(decay_fit(s, setup.family, t), ConstraintError);
  s.norm = SobolevTarget{2.5, 2.0};
  EXPECT_THROW(decay_fit(s, setup.family, t), ConstraintError);
}

TEST(Operators, DecayFitMatchesTheory) {
  DecaySpec s;
  s.alpha = 0.4;
  s.p = 2.0;
  s.norm = LpTarget{4.0};
  const auto setup = decay_setup(s.alpha, s.phi.delta(), 1e2, 1e3);
  const auto fit = decay_fit(s, setup.family, log_times(0.1, 1e3, 4));
  EXPECT_LT(fit.rel_err, 0.05) << fit.slope_hat << " vs " << fit.slope_theory;
}

TEST(Operators, MultiplierProbeIsUniform) {
  const TorusGrid g(1, 512, 32 * std::numbers::pi);
  const auto family = probe_family(g, 7, 12);
  const auto t = log_times(0.1, 100.0, 2);
  for (auto kind : {OperatorKind::S, OperatorKind::P}) {
    const auto probe = multiplier_bound_probe(kind, {0.6, BernsteinFunction::power(1.0), 1.0, 1.0, 1.0}, 3.0, t, family);
    EXPECT_TRUE(std::isfinite(probe.sup_ratio));
    EXPECT_LT(probe.variation, 3.0);
  }
}
