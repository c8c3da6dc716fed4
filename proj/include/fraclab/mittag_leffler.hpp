#pragma once

// Two-parameter Mittag-Leffler function E_{a,b}(z) = sum_n z^n / Gamma(a n + b).
//
// Four evaluation routes, all exposed so they can be checked against each other:
//   ml_series          power series, |z| <= series_radius(alpha)
//   ml_integral        real-line integral representation (+ exponential term
//                      when |arg z| < alpha*pi), valid for 0 < alpha < 1, beta < 1 + alpha
//   ml_imaginary_axis  the same representation specialised to z = -i t^alpha lambda
//   ml_contour         Laplace inversion of s^(alpha-beta) / (s^alpha - z) on a parabola
// ml_eval dispatches between them.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "fraclab/error.hpp"

namespace fraclab {

using cplx = std::complex<double>;

struct MLQuery {
  double alpha = 0.5;
  double beta = 1.0;
  cplx z{0.0, 0.0};
  /// Relative accuracy target.
  double tol = 1e-10;
};

struct QuadratureSpec {
  /// Kronrod points per panel: one of 21, 31, 41, 51, 61.
  int node_count = 31;
  /// Upper limit U of the e^{-u} kernel after substitution; <= 0 means -2 ln(tol).
  double tail_cutoff = 0.0;
  /// Minimum allowed distance of a denominator root from the integration path, relative to |z|.
  /// The default is sin(pi * 1e-3): on the imaginary axis it trips within 1e-3 of alpha = 1/2.
  double singularity_guard = 3.1415874858795764e-3;
};

enum class MLKind { E11, Eaa };

enum class MLBranch { series, integral, imaginary_axis, contour };

inline constexpr double ml_series_max_terms = 1e4;

/// Largest |z| handed to the power series. Beyond |z|^(1/alpha) ~ 8 the partial sums
/// cancel catastrophically on the negative half plane.
inline double series_radius(double alpha) { return std::min(5.0, std::pow(8.0, alpha)); }

/// 1/Gamma(x), zero at the poles.
inline double rgamma(double x) {
  if (x <= 0.0 && x == std::floor(x)) return 0.0;
  if (x < 170.0) return 1.0 / std::tgamma(x);
  return std::exp(-std::lgamma(x));
}

namespace detail {

inline void check_alpha(double alpha, bool allow_one) {
  if (!(alpha > 0.0 && (alpha < 1.0 || (allow_one && alpha == 1.0))))
    throw DomainError(fmt::format("Mittag-Leffler: alpha={} outside (0,{}", alpha, allow_one ? "1]" : "1)"));
}

// Neumaier-compensated complex accumulator.
struct CompensatedSum {
  double re = 0.0, im = 0.0, cre = 0.0, cim = 0.0;

  static void add(double& s, double& c, double x) {
    const double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }
  void operator+=(cplx v) {
    add(re, cre, v.real());
    add(im, cim, v.imag());
  }
  cplx value() const { return {re + cre, im + cim}; }
};

// Breakpoints covering [0, upper]: a geometric ladder below `upper` down to
// `finest`, plus any interior feature points.
inline std::vector<double> panel_points(double upper, double finest, std::span<const double> features) {
  std::vector<double> pts{0.0, upper};
  finest = std::clamp(finest, upper * 1e-14, upper);
  for (double x = upper / 2.0; x > finest; x /= 2.0) pts.push_back(x);
  for (double f : features) {
    if (f > 0.0 && f < upper) {
      pts.push_back(f);
      // resolve a near pole from both sides
      for (double w : {0.5, 0.9, 0.99, 1.01, 1.1, 1.5})
        if (f * w < upper) pts.push_back(f * w);
    }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

// Kronrod rule on [a, b], applied to the map onto [-1, 1] so that the error estimate
// refers to [a, b] (Boost reports it for the reference interval).
template <int Points, class F>
cplx gk_rule(F& f, double a, double b, double& err, double& l1) {
  using boost::math::quadrature::gauss_kronrod;
  const double mid = 0.5 * (a + b), h = 0.5 * (b - a);
  auto g = [&](double x) -> cplx { return h * f(mid + h * x); };
  return gauss_kronrod<double, Points>::integrate(g, -1.0, 1.0, 0, 0.0, &err, &l1);
}

template <int Points, class F>
cplx gk_bisect(F& f, double a, double b, double abs_tol, int depth, double& err_sum, double& l1_sum) {
  double err = 0.0, l1 = 0.0;
  const cplx v = gk_rule<Points>(f, a, b, err, l1);
  if (err <= abs_tol || depth == 0) {
    err_sum += err;
    l1_sum += l1;
    return v;
  }
  const double mid = 0.5 * (a + b);
  return gk_bisect<Points>(f, a, mid, 0.5 * abs_tol, depth - 1, err_sum, l1_sum) +
         gk_bisect<Points>(f, mid, b, 0.5 * abs_tol, depth - 1, err_sum, l1_sum);
}

// One pass fixes the global scale; panels whose error is large against it are bisected
// until each meets its share of tol times the whole integral of |f|.
template <int Points, class F>
cplx gk_panels_fixed(F&& f, std::span<const double> pts, double tol, double& err_sum, double& l1_sum) {
  const std::size_t np = pts.size() - 1;
  std::vector<cplx> val(np);
  std::vector<double> err(np), l1(np);
  double l1_total = 0.0;
  for (std::size_t i = 0; i < np; ++i) {
    val[i] = gk_rule<Points>(f, pts[i], pts[i + 1], err[i], l1[i]);
    l1_total += l1[i];
  }
  const double budget = tol * l1_total / static_cast<double>(np);
  cplx total{};
  for (std::size_t i = 0; i < np; ++i) {
    if (err[i] > budget) {
      err[i] = l1[i] = 0.0;
      val[i] = gk_bisect<Points>(f, pts[i], pts[i + 1], budget, 12, err[i], l1[i]);
    }
    total += val[i];
    err_sum += err[i];
    l1_sum += l1[i];
  }
  return total;
}

// Adaptive Gauss-Kronrod over consecutive panels; throws when the summed error
// estimate exceeds 10*tol relative to the L1 norm of the integrand.
template <class F>
cplx gk_panels(F&& f, std::span<const double> pts, double tol, int node_count) {
  double err = 0.0, l1 = 0.0;
  cplx r;
  switch (node_count) {
  case 21: r = gk_panels_fixed<21>(f, pts, tol, err, l1); break;
  case 31: r = gk_panels_fixed<31>(f, pts, tol, err, l1); break;
  case 41: r = gk_panels_fixed<41>(f, pts, tol, err, l1); break;
  case 51: r = gk_panels_fixed<51>(f, pts, tol, err, l1); break;
  case 61: r = gk_panels_fixed<61>(f, pts, tol, err, l1); break;
  default: throw DomainError(fmt::format("QuadratureSpec: unsupported node_count {}", node_count));
  }
  if (!std::isfinite(r.real()) || !std::isfinite(r.imag()) || err > 10.0 * tol * std::max(l1, 1e-300))
    throw QuadratureError(fmt::format("Gauss-Kronrod: error estimate {:.3g} exceeds tolerance (L1 {:.3g})", err, l1));
  return r;
}

inline double tail_cutoff(const QuadratureSpec& qs, double tol) {
  return qs.tail_cutoff > 0.0 ? qs.tail_cutoff : -2.0 * std::log(std::max(tol, 1e-16));
}

} // namespace detail

/// Partial sums of the defining series, truncated once three consecutive terms
/// fall below tol * |partial sum|.
inline cplx ml_series(const MLQuery& q) {
  detail::check_alpha(q.alpha, true);
  const double radius = series_radius(q.alpha);
  if (std::abs(q.z) > radius * (1.0 + 1e-12))
    throw DomainError(fmt::format("ml_series: |z|={} beyond series radius {}", std::abs(q.z), radius));
  detail::CompensatedSum sum;
  cplx zn{1.0, 0.0};
  int small_run = 0;
  for (int n = 0; n < ml_series_max_terms; ++n) {
    const cplx term = zn * rgamma(q.alpha * n + q.beta);
    sum += term;
    const double scale = std::max(std::abs(sum.value()), std::numeric_limits<double>::min());
    // terms keep growing while alpha n + beta is below |z|^(1/alpha)
    if (std::abs(term) <= q.tol * 1e-3 * scale && q.alpha * n + q.beta > 1.0) {
      if (++small_run == 3) return sum.value();
    } else {
      small_run = 0;
    }
    zn *= q.z;
    if (zn == cplx{}) return sum.value();
  }
  throw ConvergenceError(fmt::format("ml_series: no convergence in {} terms (alpha={}, z={}+{}i)",
                                     ml_series_max_terms, q.alpha, q.z.real(), q.z.imag()));
}

/// Real-line integral representation. The kernel is integrated in v with
/// u = r^(1/alpha) = v^m, m = 1/(1 + alpha - beta), which removes the
/// algebraic endpoint factor and leaves (m/pi) e^{-v^m} N(r)/D(r).
inline cplx ml_integral(const MLQuery& q, const QuadratureSpec& qs = {}) {
  detail::check_alpha(q.alpha, false);
  const double a = q.alpha, b = q.beta;
  if (!(b < 1.0 + a)) throw DomainError(fmt::format("ml_integral: beta={} must be < 1+alpha", b));
  if (q.z == cplx{}) throw DomainError("ml_integral: z = 0 excluded");
  const double pi = std::numbers::pi;
  const cplx z = q.z;
  const double absz = std::abs(z);
  const double u_max = detail::tail_cutoff(qs, q.tol);
  const double r_max = std::pow(u_max, a);
  const double m = 1.0 / (1.0 + a - b);
  const double v_max = std::pow(u_max, 1.0 / m);

  // roots of r^2 - 2 r z cos(pi a) + z^2 = (r - z e^{i pi a})(r - z e^{-i pi a})
  std::vector<double> features;
  for (double sgn : {1.0, -1.0}) {
    const cplx root = z * std::polar(1.0, sgn * pi * a);
    if (root.real() > 0.0 && root.real() <= 2.0 * r_max) {
      if (std::abs(root.imag()) < qs.singularity_guard * absz)
        throw SingularQuadratureError(fmt::format(
            "ml_integral: denominator root {}{:+}i within guard of the path (alpha={}, beta={})",
            root.real(), root.imag(), a, b));
      features.push_back(std::pow(root.real(), 1.0 / (m * a)));
    }
  }
  const double s1 = std::sin(pi * (1.0 - b));
  const double s2 = std::sin(pi * (1.0 - b + a));
  const double c = std::cos(pi * a);
  auto integrand = [&](double v) -> cplx {
    const double r = std::pow(v, m * a);
    const cplx num = r * s1 - z * s2;
    const cplx den = r * r - 2.0 * r * z * c + z * z;
    return (m / pi) * std::exp(-std::pow(v, m)) * num / den;
  };
  // finest panel scale, mapped from r to v
  const double finest_r = std::min(1.0, absz) * 1e-4;
  const auto pts = detail::panel_points(v_max, std::pow(finest_r, 1.0 / (m * a)), features);
  cplx result = detail::gk_panels(integrand, pts, q.tol, qs.node_count);
  if (std::abs(std::arg(z)) < a * pi)
    result += (1.0 / a) * std::pow(z, (1.0 - b) / a) * std::exp(std::pow(z, 1.0 / a));
  return result;
}

/// E_{alpha,1}(-i t^alpha lambda) or E_{alpha,alpha}(-i t^alpha lambda) from the
/// imaginary-axis forms: a single integral for alpha <= 1/2, plus a decaying
/// exponential term for alpha > 1/2.
inline cplx ml_imaginary_axis(double alpha, double t, double lambda, MLKind kind,
                              const QuadratureSpec& qs = {}, double tol = 1e-10) {
  detail::check_alpha(alpha, false);
  if (!(t >= 0.0) || !(lambda >= 0.0))
    throw DomainError(fmt::format("ml_imaginary_axis: need t, lambda >= 0 (got {}, {})", t, lambda));
  const double y = std::pow(t, alpha) * lambda;
  const double beta = kind == MLKind::E11 ? 1.0 : alpha;
  // below this the kernel spike at r ~ y is unresolvable and two series terms are exact
  if (y < 1e-12) return cplx{rgamma(beta), -y * rgamma(alpha + beta)};
  const double pi = std::numbers::pi;
  const double sa = std::sin(alpha * pi), ca = std::cos(alpha * pi);
  const double u_max = detail::tail_cutoff(qs, tol);
  const double r_max = std::pow(u_max, alpha);

  // root of r^2 + 2 i y r cos(a pi) - y^2 with positive real part: y (sin(a pi) - i cos(a pi))
  std::vector<double> features;
  const double root_re = y * sa;
  if (root_re <= 2.0 * r_max) {
    if (std::abs(ca) < qs.singularity_guard)
      throw SingularQuadratureError(fmt::format(
          "ml_imaginary_axis: alpha={} too close to 1/2, denominator vanishes near r={}", alpha, root_re));
    features.push_back(root_re);
  }
  const cplx iy2c{0.0, 2.0 * y * ca};
  auto den = [&](double r) { return r * r + iy2c * r - y * y; };
  const auto pts = detail::panel_points(r_max, std::min(1.0, root_re) * 1e-4, features);

  cplx result;
  if (kind == MLKind::E11) {
    auto f = [&](double r) -> cplx { return std::exp(-std::pow(r, 1.0 / alpha)) * y / den(r); };
    result = cplx{0.0, sa / (alpha * pi)} * detail::gk_panels(f, pts, tol, qs.node_count);
  } else {
    auto f = [&](double r) -> cplx {
      const double ra = std::pow(r, 1.0 / alpha);
      return ra * std::exp(-ra) / den(r);
    };
    result = (std::sin((1.0 - alpha) * pi) / (alpha * pi)) * detail::gk_panels(f, pts, tol, qs.node_count);
  }
  if (alpha > 0.5) {
    const cplx expo = std::pow(y, 1.0 / alpha) * std::polar(1.0, -pi / (2.0 * alpha));
    if (kind == MLKind::E11)
      result += (1.0 / alpha) * std::exp(expo);
    else
      result += (1.0 / alpha) * std::polar(1.0, -0.5 * pi * (1.0 - alpha) / alpha) *
                std::pow(y, (1.0 - alpha) / alpha) * std::exp(expo);
  }
  return result;
}

/// Laplace inversion along the parabola s(u) = mu (1 + iu)^2 by the trapezoidal
/// rule. The pole s* = z^(1/alpha), present when |arg z| < alpha pi, is kept at
/// least half a unit away from the path in the u-plane; when it lies outside the
/// parabola its residue (1/alpha) s*^(1-beta) e^{s*} is added back.
inline cplx ml_contour(const MLQuery& q, double step = 1.0 / 16.0) {
  detail::check_alpha(q.alpha, true);
  const double a = q.alpha, b = q.beta, pi = std::numbers::pi;
  if (q.z == cplx{}) return rgamma(b);
  const cplx z = q.z;
  const bool has_pole = std::abs(std::arg(z)) < a * pi;
  cplx pole{};
  double mu = 1.0;
  bool pole_outside = false;
  if (has_pole) {
    pole = std::pow(z, 1.0 / a);
    const double rho = std::sqrt(pole).real();
    const double rho2 = rho * rho;
    if (rho2 / 4.0 >= 0.1) {
      mu = std::min(rho2 / 4.0, 4.0); // Re sqrt(s*/mu) >= 2
      pole_outside = true;
    } else {
      mu = std::max(4.0 * rho2, 0.1); // Re sqrt(s*/mu) <= 1/2
    }
  }
  const double u_max = std::sqrt(1.0 + 50.0 / mu);
  const int n = static_cast<int>(std::ceil(u_max / step));
  auto integrand = [&](double u) -> cplx {
    const cplx w{1.0, u};
    const cplx s = mu * w * w;
    const cplx sa = std::pow(s, a);
    return std::exp(s) * std::pow(s, a - b) / (sa - z) * w;
  };
  detail::CompensatedSum sum;
  sum += integrand(0.0);
  for (int k = 1; k <= n; ++k) {
    sum += integrand(k * step);
    sum += integrand(-k * step);
  }
  cplx result = sum.value() * (mu * step / pi);
  if (pole_outside) result += (1.0 / a) * std::pow(pole, 1.0 - b) * std::exp(pole);
  if (!std::isfinite(result.real()) || !std::isfinite(result.imag()))
    throw ConvergenceError(fmt::format("ml_contour: non-finite result (alpha={}, beta={}, z={}{:+}i)",
                                       a, b, z.real(), z.imag()));
  return result;
}

/// Which branch ml_eval would try first for this query.
inline MLBranch ml_primary_branch(const MLQuery& q) {
  const double pi = std::numbers::pi;
  if (q.z == cplx{} || std::abs(q.z) <= series_radius(q.alpha)) return MLBranch::series;
  if (q.alpha < 1.0 && std::abs(std::abs(std::arg(q.z)) - pi / 2) <= 1e-12 &&
      (q.beta == 1.0 || q.beta == q.alpha))
    return MLBranch::imaginary_axis;
  if (q.alpha < 1.0 && q.beta < 1.0 + q.alpha) return MLBranch::integral;
  return MLBranch::contour;
}

/// Dispatching evaluator: series, then imaginary-axis or integral form, then the
/// contour fallback when the integral form is near-singular or fails.
inline cplx ml_eval(const MLQuery& q, const QuadratureSpec& qs = {}) {
  detail::check_alpha(q.alpha, true);
  if (q.z == cplx{}) return rgamma(q.beta);
  switch (ml_primary_branch(q)) {
  case MLBranch::series: return ml_series(q);
  case MLBranch::imaginary_axis:
    try {
      const MLKind kind = q.beta == 1.0 ? MLKind::E11 : MLKind::Eaa;
      if (q.z.imag() < 0.0) return ml_imaginary_axis(q.alpha, 1.0, std::abs(q.z), kind, qs, q.tol);
      return std::conj(ml_imaginary_axis(q.alpha, 1.0, std::abs(q.z), kind, qs, q.tol));
    } catch (const SingularQuadratureError&) {
    } catch (const QuadratureError&) {
    }
    break;
  case MLBranch::integral:
    try {
      return ml_integral(q, qs);
    } catch (const SingularQuadratureError&) {
    } catch (const QuadratureError&) {
    }
    break;
  case MLBranch::contour: break;
  }
  return ml_contour(q);
}

inline cplx ml_eval(double alpha, double beta, cplx z) { return ml_eval(MLQuery{alpha, beta, z}); }

/// Relative deviation of int_0^inf e^{-st} t^{beta-1} E_{alpha,beta}(-a t^alpha) dt
/// from s^(alpha-beta) / (s^alpha + a). With x = t^beta the weight t^(beta-1) dt
/// becomes dx / beta.
inline double laplace_identity_residual(double alpha, double beta, cplx a, double s, double tol = 1e-9) {
  detail::check_alpha(alpha, true);
  if (!(s > 0.0)) throw DomainError(fmt::format("laplace_identity_residual: s={} must be positive", s));
  if (!(beta > 0.0)) throw DomainError("laplace_identity_residual: beta must be positive");
  const cplx closed = std::pow(s, alpha - beta) / (std::pow(s, alpha) + a);
  if (!std::isfinite(std::abs(closed)))
    throw DomainError("laplace_identity_residual: s^alpha + a vanishes");
  const double t_max = 60.0 / s;
  const double x_max = std::pow(t_max, beta);
  auto integrand = [&](double x) -> cplx {
    const double t = std::pow(x, 1.0 / beta);
    return std::exp(-s * t) / beta * ml_eval(MLQuery{alpha, beta, -a * std::pow(t, alpha)});
  };
  const auto pts = detail::panel_points(x_max, x_max * 1e-9, {});
  cplx integral;
  try {
    integral = detail::gk_panels(integrand, pts, tol, 31);
  } catch (const QuadratureError& e) {
    throw QuadratureError(fmt::format("laplace_identity_residual: {}", e.what()));
  }
  return std::abs(integral - closed) / std::abs(closed);
}

/// Nodes T (k/N)^grading, k = 0..N.
inline std::vector<double> graded_mesh(double horizon, int steps, double grading) {
  if (!(horizon > 0.0) || steps < 1 || !(grading >= 1.0))
    throw DomainError(fmt::format("graded_mesh: bad (T={}, M={}, grading={})", horizon, steps, grading));
  std::vector<double> t(steps + 1);
  for (int k = 0; k <= steps; ++k) t[k] = horizon * std::pow(double(k) / steps, grading);
  t.back() = horizon;
  return t;
}

/// Caputo derivative of f on a mesh by the L1 product-integration scheme; entry 0 is left at 0.
inline std::vector<cplx> caputo_l1(double alpha, std::span<const double> t, std::span<const cplx> f) {
  if (t.size() != f.size() || t.size() < 2) throw ShapeError("caputo_l1: mesh/value size mismatch");
  const double w = 1.0 / std::tgamma(2.0 - alpha);
  std::vector<cplx> d(t.size());
  for (std::size_t n = 1; n < t.size(); ++n) {
    detail::CompensatedSum acc;
    for (std::size_t k = 0; k < n; ++k) {
      const double h = t[k + 1] - t[k];
      const double kern = std::pow(t[n] - t[k], 1.0 - alpha) - std::pow(t[n] - t[k + 1], 1.0 - alpha);
      acc += (f[k + 1] - f[k]) / h * kern;
    }
    d[n] = w * acc.value();
  }
  return d;
}

/// max over nodes t_n > 0, t_n >= t_min, of |D^alpha f(t_n) + i lambda f(t_n)| with
/// f(t) = E_{alpha,1}(-i lambda t^alpha), which solves i D^alpha f = lambda f exactly.
/// Since f - 1 ~ t^alpha, the L1 error at the first node does not shrink with the mesh; t_min > 0
/// restricts the maximum to a fixed window.
inline double caputo_mode_residual(double alpha, double lambda, std::span<const double> t_grid, double t_min = 0.0) {
  detail::check_alpha(alpha, false);
  if (t_grid.size() < 2 || t_grid.front() != 0.0)
    throw DomainError("caputo_mode_residual: mesh must start at 0 and have >= 2 nodes");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1])) throw DomainError("caputo_mode_residual: mesh not increasing");
  std::vector<cplx> f(t_grid.size());
  for (std::size_t k = 0; k < t_grid.size(); ++k)
    f[k] = ml_eval(MLQuery{alpha, 1.0, cplx{0.0, -lambda * std::pow(t_grid[k], alpha)}});
  const auto d = caputo_l1(alpha, t_grid, f);
  double res = 0.0;
  for (std::size_t n = 1; n < t_grid.size(); ++n)
    if (t_grid[n] >= t_min) res = std::max(res, std::abs(d[n] + cplx{0.0, lambda} * f[n]));
  return res;
}

} // namespace fraclab
