#pragma once

// Closed-form Bernstein functions phi and their derivatives.
//
// The catalog holds the four families
//   power(g)            x^g,                          0 < g <= 1
//   power_sum(g1, g2)   x^g1 + x^g2,                  0 < g1, g2 <= 1
//   relativistic(g, m)  (x + m^(1/g))^g - m,          0 < g < 1, m > 0
//   log_damped(b)       x / log(1 + x^(b/2)),         0 < b <= 2
// each optionally shifted by a drift a*x, a >= 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fraclab/error.hpp"

namespace fraclab {

enum class BernsteinFamily { power, power_sum, relativistic, log_damped };

namespace detail {

// Truncated Taylor series f(x0 + h) = sum c[k] h^k, k <= N.
template <int N>
struct Jet {
  std::array<double, N + 1> c{};

  static Jet variable(double x0) {
    Jet j;
    j.c[0] = x0;
    if constexpr (N >= 1) j.c[1] = 1.0;
    return j;
  }
  static Jet constant(double v) {
    Jet j;
    j.c[0] = v;
    return j;
  }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= N; ++k)
      for (int i = 0; i <= k; ++i) r.c[k] += a.c[i] * b.c[k - i];
    return r;
  }
  friend Jet operator/(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= N; ++k) {
      double s = a.c[k];
      for (int i = 1; i <= k; ++i) s -= b.c[i] * r.c[k - i];
      r.c[k] = s / b.c[0];
    }
    return r;
  }
  friend Jet operator+(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= N; ++k) r.c[k] = a.c[k] + b.c[k];
    return r;
  }
};

// log of a jet whose value is f0; head passed separately so log1p stays accurate.
template <int N>
Jet<N> jet_log(const Jet<N>& f, double head) {
  Jet<N> g;
  g.c[0] = head;
  for (int k = 1; k <= N; ++k) {
    double s = f.c[k];
    for (int j = 1; j < k; ++j) s -= (double(j) / k) * g.c[j] * f.c[k - j];
    g.c[k] = s / f.c[0];
  }
  return g;
}

template <int N>
Jet<N> jet_exp(const Jet<N>& f) {
  Jet<N> e;
  e.c[0] = std::exp(f.c[0]);
  for (int k = 1; k <= N; ++k) {
    double s = 0.0;
    for (int j = 1; j <= k; ++j) s += (double(j) / k) * f.c[j] * e.c[k - j];
    e.c[k] = s;
  }
  return e;
}

// x^b for a positive jet.
template <int N>
Jet<N> jet_pow(const Jet<N>& f, double b) {
  Jet<N> l = jet_log(f, std::log(f.c[0]));
  for (auto& v : l.c) v *= b;
  return jet_exp(l);
}

inline double falling_factorial(double g, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= (g - i);
  return r;
}

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

inline double binomial(int n, int k) {
  return factorial(n) / (factorial(k) * factorial(n - k));
}

} // namespace detail

class BernsteinFunction {
public:
  /// Highest order with a closed-form derivative; beyond it central differences are used.
  static constexpr int analytic_order = 4;

  static BernsteinFunction power(double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
      throw DomainError(fmt::format("power: gamma={} outside (0,1]", gamma));
    return {BernsteinFamily::power, {gamma, 0.0}, gamma};
  }

  static BernsteinFunction power_sum(double gamma1, double gamma2) {
    if (!(gamma1 > 0.0 && gamma1 <= 1.0 && gamma2 > 0.0 && gamma2 <= 1.0))
      throw DomainError(fmt::format("power_sum: exponents ({}, {}) outside (0,1]", gamma1, gamma2));
    return {BernsteinFamily::power_sum, {gamma1, gamma2}, std::min(gamma1, gamma2)};
  }

  static BernsteinFunction relativistic(double gamma, double m) {
    if (!(gamma > 0.0 && gamma < 1.0) || !(m > 0.0))
      throw DomainError(fmt::format("relativistic: need 0<gamma<1, m>0 (got {}, {})", gamma, m));
    return {BernsteinFamily::relativistic, {gamma, m}, gamma};
  }

  /// beta = 2 is accepted for evaluation, but then phi(0+) = 1 and H1 fails.
  static BernsteinFunction log_damped(double beta) {
    if (!(beta > 0.0 && beta <= 2.0))
      throw DomainError(fmt::format("log_damped: beta={} outside (0,2]", beta));
    return {BernsteinFamily::log_damped, {beta, 0.0}, std::clamp(1.0 - beta / 2.0, 1e-3, 1.0)};
  }

  /// Same function plus a drift term a*x.
  BernsteinFunction with_drift(double a) const {
    if (!(a >= 0.0)) throw DomainError(fmt::format("drift a={} must be nonnegative", a));
    BernsteinFunction r = *this;
    r.drift_ = a;
    return r;
  }

  /// Same function with a different maximal derivative order (>= 4).
  BernsteinFunction with_max_order(int n_max) const {
    if (n_max < analytic_order) throw OrderError(fmt::format("n_max={} must be >= 4", n_max));
    BernsteinFunction r = *this;
    r.n_max_ = n_max;
    return r;
  }

  BernsteinFamily family() const { return family_; }
  double param(int i) const { return params_[i]; }
  double drift() const { return drift_; }
  /// Declared scaling index of Assumption H1.
  double delta() const { return delta_; }
  int n_max() const { return n_max_; }

  std::string name() const {
    std::string base;
    switch (family_) {
    case BernsteinFamily::power: base = fmt::format("power({})", params_[0]); break;
    case BernsteinFamily::power_sum:
      base = fmt::format("power_sum({},{})", params_[0], params_[1]);
      break;
    case BernsteinFamily::relativistic:
      base = fmt::format("relativistic({},{})", params_[0], params_[1]);
      break;
    case BernsteinFamily::log_damped: base = fmt::format("log_damped({})", params_[0]); break;
    }
    if (drift_ > 0.0) base += fmt::format("+{}x", drift_);
    return base;
  }

  double operator()(double x) const { return derivative(0, x); }

  /// phi^(n)(x). Orders above 4 difference the analytic fourth derivative with h = 1e-5 x.
  double derivative(int n, double x) const {
    if (!(x > 0.0)) throw DomainError(fmt::format("{}: x={} must be positive", name(), x));
    if (n < 0 || n > n_max_)
      throw OrderError(fmt::format("{}: derivative order {} outside [0,{}]", name(), n, n_max_));
    if (n <= analytic_order) return analytic(n, x) + drift_term(n, x);
    const int k = n - analytic_order;
    const double h = x * 1e-5;
    double s = 0.0;
    for (int i = 0; i <= k; ++i) {
      const double xi = x + (0.5 * k - i) * h;
      s += ((i % 2) ? -1.0 : 1.0) * detail::binomial(k, i) * analytic(analytic_order, xi);
    }
    return s / std::pow(h, k);
  }

private:
  BernsteinFunction(BernsteinFamily f, std::array<double, 2> p, double delta)
      : family_(f), params_(p), delta_(delta) {}

  double drift_term(int n, double x) const {
    if (n == 0) return drift_ * x;
    if (n == 1) return drift_;
    return 0.0;
  }

  double analytic(int n, double x) const {
    using detail::falling_factorial;
    switch (family_) {
    case BernsteinFamily::power:
      return falling_factorial(params_[0], n) * std::pow(x, params_[0] - n);
    case BernsteinFamily::power_sum:
      return falling_factorial(params_[0], n) * std::pow(x, params_[0] - n) +
             falling_factorial(params_[1], n) * std::pow(x, params_[1] - n);
    case BernsteinFamily::relativistic: {
      const double g = params_[0], m = params_[1];
      const double shift = std::pow(m, 1.0 / g);
      if (n == 0) return m * std::expm1(g * std::log1p(x / shift));
      return falling_factorial(g, n) * std::pow(x + shift, g - n);
    }
    case BernsteinFamily::log_damped: {
      using J = detail::Jet<analytic_order>;
      const double b = params_[0] / 2.0;
      const J xv = J::variable(x);
      const J xb = detail::jet_pow(xv, b);
      J onep = xb;
      onep.c[0] += 1.0;
      const J denom = detail::jet_log(onep, std::log1p(xb.c[0]));
      const J phi = xv / denom;
      return phi.c[n] * detail::factorial(n);
    }
    }
    return 0.0;
  }

  BernsteinFamily family_;
  std::array<double, 2> params_;
  double delta_;
  double drift_ = 0.0;
  int n_max_ = 6;
};

inline double eval(const BernsteinFunction& phi, double x) { return phi(x); }

inline double eval_derivative(const BernsteinFunction& phi, int n, double x) {
  return phi.derivative(n, x);
}

struct DerivativeBoundReport {
  double max_ratio = 0.0;
  double argmax = 0.0;
  bool pass = false;
};

/// max over the grid of |x^n phi^(n)(x)| / phi(x), compared against `cap`.
inline DerivativeBoundReport verify_derivative_bound(const BernsteinFunction& phi, int n,
                                                     std::span<const double> x_grid,
                                                     double cap = 100.0) {
  if (x_grid.empty()) throw RangeError("verify_derivative_bound: empty grid");
  if (n < 0 || n > phi.n_max())
    throw OrderError(fmt::format("verify_derivative_bound: order {} unsupported", n));
  DerivativeBoundReport rep;
  for (double x : x_grid) {
    const double ratio = std::abs(std::pow(x, n) * phi.derivative(n, x)) / phi(x);
    if (!std::isfinite(ratio)) {
      rep.max_ratio = ratio;
      rep.argmax = x;
      rep.pass = false;
      return rep;
    }
    if (ratio > rep.max_ratio) {
      rep.max_ratio = ratio;
      rep.argmax = x;
    }
  }
  rep.pass = rep.max_ratio < cap;
  return rep;
}

struct ScalingIndex {
  /// Infimum over sampled pairs k < K of log(phi(K)/phi(k)) / log(K/k).
  double delta_hat = 0.0;
  /// Largest c with c (K/k)^delta <= phi(K)/phi(k) on all sampled pairs, for the declared delta.
  double c_hat = 0.0;
};

inline std::vector<double> log_grid(double lo, double hi, int samples) {
  std::vector<double> xs(samples);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < samples; ++i) xs[i] = std::exp(a + (b - a) * i / (samples - 1));
  xs.front() = lo;
  xs.back() = hi;
  return xs;
}

inline ScalingIndex scaling_index_estimate(const BernsteinFunction& phi, double k_min = 1e-20,
                                           double k_max = 1e20, int samples = 401) {
  if (!(k_min > 0.0) || !(k_min < k_max))
    throw RangeError(fmt::format("scaling_index_estimate: bad range [{}, {}]", k_min, k_max));
  if (samples < 2) throw RangeError("scaling_index_estimate: need at least 2 samples");
  const auto xs = log_grid(k_min, k_max, samples);
  std::vector<double> logphi(xs.size()), logx(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    logphi[i] = std::log(phi(xs[i]));
    logx[i] = std::log(xs[i]);
  }
  ScalingIndex out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const double dl = logx[j] - logx[i];
      const double dphi = logphi[j] - logphi[i];
      out.delta_hat = std::min(out.delta_hat, dphi / dl);
      out.c_hat = std::min(out.c_hat, std::exp(dphi - phi.delta() * dl));
    }
  }
  return out;
}

} // namespace fraclab
