#pragma once

// Periodic torus [-L/2, L/2)^d with n points per axis and a unitary DFT:
//   fhat_k = n^(-d/2) sum_x f(x) e^{-i xi_k . (x + L/2)},   xi_k = 2 pi k / L,
// so Parseval reads sum |f|^2 dx = dx sum |fhat|^2 with dx = (L/n)^d.
// Coefficients are stored in FFT order: index k >= n/2 stands for k - n.

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <fftw3.h>
#include <fmt/format.h>

#include "fraclab/error.hpp"

namespace fraclab {

using cplx = std::complex<double>;

class TorusGrid {
public:
  TorusGrid(int d, int n, double length) : d_(d), n_(n), length_(length) {
    if (d < 1 || d > 3) throw ShapeError(fmt::format("TorusGrid: dimension {} not in 1..3", d));
    if (n < 16 || !std::has_single_bit(static_cast<unsigned>(n)))
      throw ShapeError(fmt::format("TorusGrid: n={} must be a power of two >= 16", n));
    if (!(length > 0.0) || !std::isfinite(length))
      throw ShapeError(fmt::format("TorusGrid: box length {} must be positive", length));
    size_ = 1;
    for (int i = 0; i < d; ++i) size_ *= static_cast<std::size_t>(n);
    auto v = std::make_shared<std::vector<std::int64_t>>(size_);
    for (std::size_t i = 0; i < size_; ++i) {
      const auto pos = unflatten(i);
      std::int64_t s = 0;
      for (int a = 0; a < d_; ++a) {
        const std::int64_t k = wavenumber(pos[a]);
        s += k * k;
      }
      (*v)[i] = s;
    }
    ksq_ = std::move(v);
  }

  int d() const { return d_; }
  int n() const { return n_; }
  double length() const { return length_; }
  std::size_t size() const { return size_; }
  double spacing() const { return length_ / n_; }
  /// Volume element (L/n)^d.
  double cell() const { return std::pow(spacing(), d_); }
  /// Fundamental frequency 2 pi / L.
  double dxi() const { return 2.0 * std::numbers::pi / length_; }
  /// Largest resolved |xi| along an axis.
  double xi_max() const { return dxi() * (n_ / 2); }

  /// Signed integer wavenumber for FFT-order position i.
  int wavenumber(int i) const { return i < n_ / 2 ? i : i - n_; }
  double coordinate(int i) const { return -0.5 * length_ + i * spacing(); }

  /// Axis positions of a flat index, last axis fastest.
  std::array<int, 3> unflatten(std::size_t idx) const {
    std::array<int, 3> pos{0, 0, 0};
    for (int a = d_ - 1; a >= 0; --a) {
      pos[a] = static_cast<int>(idx % n_);
      idx /= n_;
    }
    return pos;
  }

  /// |k|^2 in integer units for every coefficient slot.
  const std::vector<std::int64_t>& k_squared() const { return *ksq_; }

  bool operator==(const TorusGrid& o) const { return d_ == o.d_ && n_ == o.n_ && length_ == o.length_; }

private:
  int d_, n_;
  double length_;
  std::size_t size_;
  std::shared_ptr<const std::vector<std::int64_t>> ksq_;
};

namespace detail {

class FftPlans {
public:
  static FftPlans& instance() {
    static FftPlans p;
    return p;
  }

  fftw_plan get(int d, int n, int sign) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(d, n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::size_t size = 1;
    std::array<int, 3> dims{n, n, n};
    for (int i = 0; i < d; ++i) size *= static_cast<std::size_t>(n);
    auto* buf = fftw_alloc_complex(size);
    const fftw_plan p = fftw_plan_dft(d, dims.data(), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    if (!p) throw ShapeError(fmt::format("FFTW could not plan a {}-d transform of size {}", d, n));
    plans_.emplace(key, p);
    return p;
  }

  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;

private:
  FftPlans() = default;
  ~FftPlans() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline std::vector<cplx> unitary_dft(const TorusGrid& g, std::span<const cplx> in, int sign) {
  if (in.size() != g.size())
    throw ShapeError(fmt::format("transform: {} values for a grid of {}", in.size(), g.size()));
  std::vector<cplx> out(in.begin(), in.end());
  auto* data = reinterpret_cast<fftw_complex*>(out.data());
  fftw_execute_dft(FftPlans::instance().get(g.d(), g.n(), sign), data, data);
  const double scale = 1.0 / std::sqrt(static_cast<double>(g.size()));
  for (auto& v : out) v *= scale;
  return out;
}

} // namespace detail

/// Complex field sampled on a torus grid together with its coefficients.
class SpectralField {
public:
  SpectralField(TorusGrid grid, std::vector<cplx> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw ShapeError(fmt::format("SpectralField: {} values for a grid of {}", values_.size(), grid_.size()));
    coeffs_ = detail::unitary_dft(grid_, values_, FFTW_FORWARD);
  }

  static SpectralField zeros(const TorusGrid& grid) { return {grid, std::vector<cplx>(grid.size())}; }

  static SpectralField from_coefficients(const TorusGrid& grid, std::vector<cplx> coeffs) {
    auto vals = detail::unitary_dft(grid, coeffs, FFTW_BACKWARD);
    return SpectralField(grid, std::move(vals), std::move(coeffs));
  }

  const TorusGrid& grid() const { return grid_; }
  std::span<const cplx> values() const { return values_; }
  std::span<const cplx> coefficients() const { return coeffs_; }

  SpectralField scaled(cplx c) const {
    std::vector<cplx> v(values_), k(coeffs_);
    for (auto& x : v) x *= c;
    for (auto& x : k) x *= c;
    return {grid_, std::move(v), std::move(k)};
  }

  SpectralField operator+(const SpectralField& o) const { return combine(o, 1.0); }
  SpectralField operator-(const SpectralField& o) const { return combine(o, -1.0); }

private:
  SpectralField(TorusGrid grid, std::vector<cplx> values, std::vector<cplx> coeffs)
      : grid_(std::move(grid)), values_(std::move(values)), coeffs_(std::move(coeffs)) {}

  SpectralField combine(const SpectralField& o, double sign) const {
    if (!(o.grid_ == grid_)) throw ShapeError("SpectralField: grids differ");
    std::vector<cplx> v(values_), k(coeffs_);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] += sign * o.values_[i];
      k[i] += sign * o.coeffs_[i];
    }
    return {grid_, std::move(v), std::move(k)};
  }

  TorusGrid grid_;
  std::vector<cplx> values_;
  std::vector<cplx> coeffs_;
};

inline std::vector<cplx> to_frequency(const SpectralField& f) {
  auto c = f.coefficients();
  return {c.begin(), c.end()};
}

inline SpectralField to_physical(std::vector<cplx> coeffs, const TorusGrid& grid) {
  return SpectralField::from_coefficients(grid, std::move(coeffs));
}

/// Symbol as a function of the frequency vector (first d entries used).
using Symbol = std::function<cplx(const std::array<double, 3>&)>;
/// Symbol depending on |xi| only.
using RadialSymbol = std::function<cplx(double)>;

namespace detail {

inline void check_symbol(cplx v, const std::array<double, 3>& xi, int d) {
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
    std::string where = "(";
    for (int a = 0; a < d; ++a) where += fmt::format("{}{}", a ? ", " : "", xi[a]);
    throw SymbolError(fmt::format("multiplier not finite at xi = {})", where));
  }
}

} // namespace detail

/// Pointwise product in frequency space. `at_zero` replaces the symbol at xi = 0.
inline SpectralField apply_multiplier(const SpectralField& f, const Symbol& m,
                                      std::optional<cplx> at_zero = std::nullopt) {
  const auto& g = f.grid();
  std::vector<cplx> c = to_frequency(f);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto pos = g.unflatten(i);
    std::array<double, 3> xi{0.0, 0.0, 0.0};
    bool zero = true;
    for (int a = 0; a < g.d(); ++a) {
      xi[a] = g.dxi() * g.wavenumber(pos[a]);
      zero = zero && xi[a] == 0.0;
    }
    const cplx v = (zero && at_zero) ? *at_zero : m(xi);
    detail::check_symbol(v, xi, g.d());
    c[i] *= v;
  }
  return to_physical(std::move(c), g);
}

/// Radial symbol values, one evaluation per distinct |k|^2, laid out like the coefficients.
inline std::vector<cplx> radial_table(const TorusGrid& g, const RadialSymbol& m,
                                      std::optional<cplx> at_zero = std::nullopt) {
  const auto& ksq = g.k_squared();
  std::unordered_map<std::int64_t, cplx> cache;
  std::vector<cplx> out(ksq.size());
  for (std::size_t i = 0; i < ksq.size(); ++i) {
    auto it = cache.find(ksq[i]);
    if (it == cache.end()) {
      const double r = g.dxi() * std::sqrt(static_cast<double>(ksq[i]));
      const cplx v = (ksq[i] == 0 && at_zero) ? *at_zero : m(r);
      detail::check_symbol(v, {r, 0.0, 0.0}, 1);
      it = cache.emplace(ksq[i], v).first;
    }
    out[i] = it->second;
  }
  return out;
}

inline SpectralField apply_table(const SpectralField& f, std::span<const cplx> table) {
  std::vector<cplx> c = to_frequency(f);
  if (table.size() != c.size()) throw ShapeError("apply_table: table size differs from grid");
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= table[i];
  return to_physical(std::move(c), f.grid());
}

inline SpectralField apply_radial(const SpectralField& f, const RadialSymbol& m,
                                  std::optional<cplx> at_zero = std::nullopt) {
  return apply_table(f, radial_table(f.grid(), m, at_zero));
}

/// Riemann-sum L^p norm; p = infinity gives the grid maximum. Summation is serial.
inline double lp_norm(std::span<const cplx> values, double cell, double p) {
  if (!(p >= 1.0)) throw DomainError(fmt::format("lp_norm: p={} must be >= 1", p));
  if (std::isinf(p)) {
    double m = 0.0;
    for (const auto& v : values) m = std::max(m, std::abs(v));
    return m;
  }
  double scale = 0.0;
  for (const auto& v : values) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& v : values) s += std::pow(std::abs(v) / scale, p);
  return scale * std::pow(s * cell, 1.0 / p);
}

inline double lp_norm(const SpectralField& f, double p) { return lp_norm(f.values(), f.grid().cell(), p); }

/// Kinds of generated initial data.
struct Gaussian {
  double width = 1.0;
};
/// Coefficients shaped as a smooth bump in log2|xi| on (j0 - eps, j0 + eps), zero elsewhere.
struct Annular {
  double j0 = 3.0;
  double eps = 0.25;
};
/// Complex Gaussian coefficients on 2^j_lo <= |xi| < 2^j_hi. j_lo = -inf admits the zero mode.
struct RandomBand {
  std::uint64_t seed = 0;
  double j_lo = 0.0;
  double j_hi = 3.0;
};

namespace detail {

// Box-Muller on mt19937_64 output: identical streams on every platform.
class NormalStream {
public:
  explicit NormalStream(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
  double next() {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::mt19937_64 eng_;
};

inline double smooth_bump(double t) { return std::abs(t) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t * t)) : 0.0; }

} // namespace detail

inline SpectralField make_initial_data(const Gaussian& k, const TorusGrid& g) {
  if (!(k.width > 0.0)) throw DomainError("gaussian: width must be positive");
  std::vector<cplx> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto pos = g.unflatten(i);
    double r2 = 0.0;
    for (int a = 0; a < g.d(); ++a) r2 += std::pow(g.coordinate(pos[a]), 2);
    v[i] = std::exp(-0.5 * r2 / (k.width * k.width));
  }
  return {g, std::move(v)};
}

inline SpectralField make_initial_data(const Annular& k, const TorusGrid& g) {
  if (!(k.eps > 0.0)) throw DomainError("annular: shell width must be positive");
  if (std::exp2(k.j0 + k.eps) > g.xi_max() || std::exp2(k.j0 - k.eps) < g.dxi())
    throw RangeError(fmt::format("annular: shell 2^({}+-{}) outside resolved band [{}, {}]", k.j0, k.eps,
                                 g.dxi(), g.xi_max()));
  const auto& ksq = g.k_squared();
  std::vector<cplx> c(g.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (ksq[i] == 0) continue;
    const double rho = std::log2(g.dxi() * std::sqrt(static_cast<double>(ksq[i])));
    c[i] = detail::smooth_bump((rho - k.j0) / k.eps);
  }
  return SpectralField::from_coefficients(g, std::move(c));
}

inline SpectralField make_initial_data(const RandomBand& k, const TorusGrid& g) {
  if (!(k.j_lo < k.j_hi)) throw RangeError(fmt::format("random_band: empty band [{}, {})", k.j_lo, k.j_hi));
  if (std::exp2(k.j_lo) > g.xi_max())
    throw RangeError(fmt::format("random_band: band starts at 2^{} beyond xi_max={}", k.j_lo, g.xi_max()));
  const double lo = std::exp2(k.j_lo), hi = std::exp2(k.j_hi);
  const auto& ksq = g.k_squared();
  detail::NormalStream rng(k.seed);
  std::vector<cplx> c(g.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double re = rng.next(), im = rng.next();
    const double r = g.dxi() * std::sqrt(static_cast<double>(ksq[i]));
    const bool in = (ksq[i] == 0) ? std::isinf(k.j_lo) && k.j_lo < 0 : (r >= lo && r < hi);
    if (in) c[i] = {re, im};
  }
  return SpectralField::from_coefficients(g, std::move(c));
}

} // namespace fraclab
