#pragma once

// Solution operators as radial Fourier multipliers:
//   S(t)            E_{a,1}(-i t^a phi(|xi|^2))
//   t^(a-1) P(t)    t^(a-1) E_{a,a}(-i t^a phi(|xi|^2))
// plus empirical probes of their L^p boundedness and decay in t.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "fraclab/bernstein.hpp"
#include "fraclab/error.hpp"
#include "fraclab/grid.hpp"
#include "fraclab/mittag_leffler.hpp"
#include "fraclab/parallel.hpp"
#include "fraclab/spaces.hpp"

namespace fraclab {

enum class OperatorKind { S, P };

struct PropagatorQuery {
  double alpha = 0.5;
  BernsteinFunction phi = BernsteinFunction::power(1.0);
  double t = 1.0;
  double sigma = 0.0;
  double a = 0.0;
};

inline void validate(const PropagatorQuery& q, OperatorKind kind) {
  if (!(q.alpha > 0.0 && q.alpha <= 1.0)) throw DomainError(fmt::format("propagator: alpha={} outside (0,1]", q.alpha));
  if (!(q.t >= 0.0)) throw DomainError(fmt::format("propagator: t={} must be nonnegative", q.t));
  const double smax = kind == OperatorKind::S ? 2.0 : 4.0;
  if (!(q.sigma >= 0.0 && q.sigma <= smax))
    throw DomainError(fmt::format("propagator: sigma={} outside [0,{}]", q.sigma, smax));
  if (!(q.a >= 0.0)) throw DomainError(fmt::format("propagator: a={} must be nonnegative", q.a));
}

/// E_{a,1}(-i y) for kind S, E_{a,a}(-i y) for kind P.
inline cplx ml_symbol(OperatorKind kind, double alpha, double y) {
  const double beta = kind == OperatorKind::S ? 1.0 : alpha;
  if (y == 0.0) return rgamma(beta);
  try {
    return ml_eval(MLQuery{alpha, beta, cplx{0.0, -y}});
  } catch (const Error& e) {
    throw SymbolError(fmt::format("Mittag-Leffler symbol failed at y={} (alpha={}): {}", y, alpha, e.what()));
  }
}

/// Coefficient-order table of the S symbol at time t.
inline std::vector<cplx> s_table(const TorusGrid& g, double alpha, const BernsteinFunction& phi, double t) {
  const double ta = std::pow(t, alpha);
  const double phi0 = phi_at_zero(phi);
  return radial_table(
      g, [&](double r) { return ml_symbol(OperatorKind::S, alpha, ta * phi(r * r)); },
      ml_symbol(OperatorKind::S, alpha, ta * phi0));
}

/// Coefficient-order table of t^(a-1) E_{a,a}(-i t^a phi).
inline std::vector<cplx> p_table(const TorusGrid& g, double alpha, const BernsteinFunction& phi, double t) {
  if (!(t > 0.0)) throw DomainError(fmt::format("weighted P: t={} must be positive", t));
  const double ta = std::pow(t, alpha), w = std::pow(t, alpha - 1.0);
  const double phi0 = phi_at_zero(phi);
  return radial_table(
      g, [&](double r) { return w * ml_symbol(OperatorKind::P, alpha, ta * phi(r * r)); },
      w * ml_symbol(OperatorKind::P, alpha, ta * phi0));
}

inline SpectralField apply_S(const SpectralField& f, const PropagatorQuery& q) {
  validate(q, OperatorKind::S);
  if (q.t == 0.0) return f;
  return apply_table(f, s_table(f.grid(), q.alpha, q.phi, q.t));
}

inline SpectralField apply_P_weighted(const SpectralField& f, const PropagatorQuery& q) {
  validate(q, OperatorKind::P);
  return apply_table(f, p_table(f.grid(), q.alpha, q.phi, q.t));
}

struct AdmissibleTriple {
  double p = 2.0, r = 2.0, q = std::numeric_limits<double>::infinity();
  int d = 1;
  double delta = 1.0;
};

/// Upper limit for r: dp/(d - gap) when d > gap, else infinity.
inline double critical_r(double p, int d, double gap) {
  return d > gap ? d * p / (d - gap) : std::numeric_limits<double>::infinity();
}

/// q with 1/q = (d/p - d/r) / (2 delta); infinity when p = r.
inline double admissible_q(double p, double r, int d, double delta) {
  if (d < 1) throw DomainError(fmt::format("admissible triple: dimension {} < 1", d));
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError(fmt::format("admissible triple: delta={} outside (0,1]", delta));
  if (!(p > 1.0)) throw ConstraintError(fmt::format("admissible triple: need p > 1 (p={})", p));
  if (!(p <= r)) throw ConstraintError(fmt::format("admissible triple: need p <= r (p={}, r={})", p, r));
  const double rc = critical_r(p, d, 2.0 * delta);
  if (!(r < rc))
    throw ConstraintError(fmt::format("admissible triple: need r < dp/(d-2 delta) = {} (r={})", rc, r));
  if (p == r) return std::numeric_limits<double>::infinity();
  return 2.0 * delta / (d / p - d / r);
}

inline AdmissibleTriple make_admissible(double p, double r, int d, double delta) {
  return {p, r, admissible_q(p, r, d, delta), d, delta};
}

struct BoundProbe {
  double sup_ratio = 0.0;
  /// max_t / min_t of the per-t suprema.
  double variation = 1.0;
  std::vector<double> t;
  std::vector<double> per_t;
};

/// Table of (a + t^alpha phi)^(sigma/2) times the kind's unweighted Mittag-Leffler symbol.
inline std::vector<cplx> weighted_symbol_table(OperatorKind kind, const PropagatorQuery& q, const TorusGrid& g) {
  const double ta = std::pow(q.t, q.alpha);
  auto m = [&](double phi_val) {
    const double y = ta * phi_val;
    const double base = q.a + y;
    const double w = q.sigma == 0.0 ? 1.0 : std::pow(base, 0.5 * q.sigma);
    return w * ml_symbol(kind, q.alpha, y);
  };
  return radial_table(g, [&](double r) { return m(q.phi(r * r)); }, m(phi_at_zero(q.phi)));
}

/// sup over the family of ||m_t g||_p / ||g||_p for each t, m_t the weighted symbol.
inline BoundProbe multiplier_bound_probe(OperatorKind kind, PropagatorQuery q, double p, std::span<const double> t_set,
                                         std::span<const SpectralField> family) {
  validate(q, kind);
  if (!(p > 1.0)) throw DomainError(fmt::format("bound probe: p={} must exceed 1", p));
  if (family.empty() || t_set.empty()) throw RangeError("bound probe: empty family or t set");
  const TorusGrid& g = family.front().grid();
  std::vector<double> denom(family.size());
  for (std::size_t i = 0; i < family.size(); ++i) denom[i] = lp_norm(family[i], p);

  BoundProbe out;
  out.t.assign(t_set.begin(), t_set.end());
  out.per_t.assign(t_set.size(), 0.0);
  parallel_for(t_set.size(), [&](std::size_t k) {
    PropagatorQuery qk = q;
    qk.t = t_set[k];
    const auto table = weighted_symbol_table(kind, qk, g);
    double best = 0.0;
    for (std::size_t i = 0; i < family.size(); ++i)
      if (denom[i] > 0.0) best = std::max(best, lp_norm(apply_table(family[i], table), p) / denom[i]);
    out.per_t[k] = best;
  });
  const auto [lo, hi] = std::minmax_element(out.per_t.begin(), out.per_t.end());
  out.sup_ratio = *hi;
  out.variation = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  return out;
}

/// Fifty fields covering the dyadic shells of the grid, two of them containing the zero mode.
inline std::vector<SpectralField> probe_family(const TorusGrid& g, std::uint64_t seed, int count = 50) {
  const double j_lo = std::log2(g.dxi()), j_hi = std::log2(g.xi_max());
  const int shells = std::max(1, static_cast<int>(std::floor(j_hi - j_lo)) - 1);
  std::vector<SpectralField> out;
  for (int i = 0; i < count; ++i) {
    const int width = 1 + i % 3;
    const int start = (i / 3) % shells;
    RandomBand b{seed + static_cast<std::uint64_t>(i), j_lo + start, std::min(j_lo + start + width, j_hi - 0.5)};
    if (i % 25 == 0) b.j_lo = -std::numeric_limits<double>::infinity();
    out.push_back(make_initial_data(b, g));
  }
  return out;
}

// Decay experiments.

/// ||.||_{L^r}.
struct LpTarget {
  double r = 2.0;
};
/// Homogeneous Besov B^{b,phi}_{r,kappa}.
struct BesovTarget {
  double b = 0.0, r = 2.0, kappa = 2.0;
};
/// ||(I + phi(-Laplacian))^(sigma/2) .||_{L^r}.
struct SobolevTarget {
  double sigma = 0.0, r = 2.0;
};
using DecayNorm = std::variant<LpTarget, BesovTarget, SobolevTarget>;

struct DecaySpec {
  OperatorKind kind = OperatorKind::S;
  DecayNorm norm = LpTarget{};
  double alpha = 0.5;
  BernsteinFunction phi = BernsteinFunction::power(1.0);
  /// Source Lebesgue exponent.
  double p = 2.0;
  /// Source smoothness for Besov targets (homogeneous B^{a,phi}_{p,kappa}).
  double a = 0.0;
  /// Fit window [t_hi / fit_decades^10, t_hi] over the top of the t grid.
  double fit_decades = 1.0;
};

struct DecayFit {
  std::vector<double> t;
  std::vector<double> norm;
  double slope_hat = 0.0;
  double slope_theory = 0.0;
  /// |hat - theory| / |theory|, or the absolute gap when the theory slope is zero.
  double rel_err = 0.0;
};

namespace detail {

inline double decay_gap(const DecaySpec& s, int d) {
  const double delta = s.phi.delta();
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, LpTarget>)
          return d / s.p - d / n.r;
        else if constexpr (std::is_same_v<T, BesovTarget>)
          return (n.b - s.a) * delta + d / s.p - d / n.r;
        else
          return delta * n.sigma + d / s.p - d / n.r;
      },
      s.norm);
}

inline void check_decay_constraints(const DecaySpec& s, int d) {
  const double delta = s.phi.delta();
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if (!(s.p > 1.0 && s.p <= n.r)) throw ConstraintError(fmt::format("decay: need 1 < p <= r (p={}, r={})", s.p, n.r));
        if constexpr (std::is_same_v<T, LpTarget>) {
          const double rc = critical_r(s.p, d, 2.0 * delta);
          if (!(n.r < rc)) throw ConstraintError(fmt::format("decay: need r < dp/(d-2 delta) = {}", rc));
        } else if constexpr (std::is_same_v<T, SobolevTarget>) {
          if (!(n.sigma >= 0.0 && n.sigma <= 2.0)) throw ConstraintError("decay: sigma outside [0,2]");
          const double rc = critical_r(s.p, d, (2.0 - n.sigma) * delta);
          if (!(n.r < rc)) throw ConstraintError(fmt::format("decay: need r < dp/(d-(2-sigma) delta) = {}", rc));
        } else {
          if (!(n.b >= s.a)) throw ConstraintError("decay: need b >= a");
          if (!std::isfinite(n.r)) throw ConstraintError("decay: need r < infinity");
          const double limit = s.kind == OperatorKind::S ? 1.0 : 2.0;
          const double lhs = ((n.b - s.a) * delta + d / s.p - d / n.r) / (2.0 * delta);
          if (!(lhs < limit))
            throw ConstraintError(fmt::format("decay: ((b-a) delta + d/p - d/r)/(2 delta) = {} must be < {}", lhs, limit));
        }
      },
      s.norm);
}

inline double target_norm(const SpectralField& f, const DecaySpec& s, const DyadicPartition& part) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, LpTarget>)
          return lp_norm(f, n.r);
        else if constexpr (std::is_same_v<T, BesovTarget>)
          return besov_norm(f, SpaceSpec{SpaceKind::besov, n.b, n.r, n.kappa, true, s.phi}, part);
        else
          return sobolev_phi_norm(f, n.sigma, n.r, s.phi);
      },
      s.norm);
}

inline double source_norm(const SpectralField& f, const DecaySpec& s, const DyadicPartition& part) {
  if (const auto* b = std::get_if<BesovTarget>(&s.norm))
    return besov_norm(f, SpaceSpec{SpaceKind::besov, s.a, s.p, b->kappa, true, s.phi}, part);
  return lp_norm(f, s.p);
}

} // namespace detail

/// Least-squares slope of log y against log x.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw RangeError("loglog_slope: need >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline double decay_slope_theory(const DecaySpec& s, int d) {
  const double slope = -(s.alpha / (2.0 * s.phi.delta())) * detail::decay_gap(s, d);
  return s.kind == OperatorKind::P ? slope + (s.alpha - 1.0) : slope;
}

/// For every t, the supremum over the family of ||Op(t) g||_target / ||g||_source; the
/// slope is fitted over the top decade(s) of t. A family of dilations of one profile
/// turns the fixed-data decay into the operator-norm decay the estimates describe.
inline DecayFit decay_fit(const DecaySpec& s, std::span<const SpectralField> family, std::span<const double> t_grid) {
  if (family.empty()) throw RangeError("decay_fit: empty data family");
  if (t_grid.size() < 2) throw RangeError("decay_fit: need >= 2 times");
  if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw DomainError(fmt::format("decay_fit: alpha={} outside (0,1)", s.alpha));
  const TorusGrid& g = family.front().grid();
  detail::check_decay_constraints(s, g.d());
  const DyadicPartition part(g);

  std::vector<double> src(family.size());
  for (std::size_t i = 0; i < family.size(); ++i) src[i] = detail::source_norm(family[i], s, part);

  DecayFit out;
  out.t.assign(t_grid.begin(), t_grid.end());
  out.norm.assign(t_grid.size(), 0.0);
  parallel_for(t_grid.size(), [&](std::size_t k) {
    const double t = t_grid[k];
    if (!(t > 0.0)) throw DomainError("decay_fit: times must be positive");
    const auto table = s.kind == OperatorKind::S ? s_table(g, s.alpha, s.phi, t) : p_table(g, s.alpha, s.phi, t);
    double best = 0.0;
    for (std::size_t i = 0; i < family.size(); ++i)
      if (src[i] > 0.0) best = std::max(best, detail::target_norm(apply_table(family[i], table), s, part) / src[i]);
    out.norm[k] = best;
  });

  const double t_hi = *std::max_element(t_grid.begin(), t_grid.end());
  const double t_lo = t_hi * std::pow(10.0, -s.fit_decades) * (1.0 - 1e-12);
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < out.t.size(); ++k) {
    if (out.t[k] < t_lo) continue;
    if (!(out.norm[k] > 1e-13))
      throw ConvergenceError(fmt::format("decay_fit: degenerate fit, norm {} at t={}", out.norm[k], out.t[k]));
    xs.push_back(out.t[k]);
    ys.push_back(out.norm[k]);
  }
  out.slope_hat = loglog_slope(xs, ys);
  out.slope_theory = decay_slope_theory(s, g.d());
  const double gap = std::abs(out.slope_hat - out.slope_theory);
  out.rel_err = out.slope_theory == 0.0 ? gap : gap / std::abs(out.slope_theory);
  return out;
}

/// Gaussians of widths w0 * ratio^k, k = 0..count-1.
inline std::vector<SpectralField> dilation_family(const TorusGrid& g, double w0, double ratio, int count) {
  std::vector<SpectralField> out;
  for (int k = 0; k < count; ++k) out.push_back(make_initial_data(Gaussian{w0 * std::pow(ratio, k)}, g));
  return out;
}

/// Grid and Gaussian dilation family sized for a fit window [t_fit_lo, t_hi]: the operators act
/// on the length scale l(t) = t^(alpha/(2 delta)), so widths run from l(t_fit_lo)/4 to 8 l(t_hi)
/// in quarter octaves, the box is 64 l(t_hi) and the spacing an eighth of the narrowest width.
struct DecaySetup {
  TorusGrid grid;
  std::vector<SpectralField> family;
};

inline DecaySetup decay_setup(double alpha, double delta, double t_fit_lo, double t_hi, int d = 1) {
  auto scale = [&](double t) { return std::pow(t, alpha / (2.0 * delta)); };
  const double w_lo = scale(t_fit_lo) / 4.0, w_hi = 8.0 * scale(t_hi);
  const double length = 64.0 * scale(t_hi);
  const double points = length / (w_lo / 8.0);
  const int n = std::max(16, static_cast<int>(std::bit_ceil(static_cast<unsigned>(std::ceil(points)))));
  const int count = static_cast<int>(std::ceil(4.0 * std::log2(w_hi / w_lo))) + 1;
  TorusGrid g(d, n, length);
  auto family = dilation_family(g, w_lo, std::pow(2.0, 0.25), count);
  return {g, std::move(family)};
}

inline std::vector<double> log_times(double lo, double hi, int per_decade) {
  const int n = static_cast<int>(std::lround(std::log10(hi / lo) * per_decade));
  return log_grid(lo, hi, n + 1);
}

} // namespace fraclab
