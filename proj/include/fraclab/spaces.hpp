#pragma once

// Littlewood-Paley blocks on a torus grid and the phi-weighted Besov,
// Triebel-Lizorkin and Bessel-potential norms built from them.
//
// The block profile is psi(rho), rho = log2|xi| - j: a smooth step S rising across
// [-1/2 - w/2, -1/2 + w/2], flat at 1, then 1 - S(rho - 1). Neighbouring blocks sum to
// exactly 1, and each block vanishes outside 2^(j-1) < |xi| < 2^(j+1).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fraclab/bernstein.hpp"
#include "fraclab/error.hpp"
#include "fraclab/grid.hpp"

namespace fraclab {

enum class SpaceKind { besov, triebel };

struct SpaceSpec {
  SpaceKind kind = SpaceKind::besov;
  double s = 0.0;
  double p = 2.0;
  /// Summability over blocks; infinity means the supremum.
  double q = 2.0;
  bool homogeneous = false;
  BernsteinFunction phi = BernsteinFunction::power(1.0);
};

inline void validate(const SpaceSpec& sp) {
  if (!(sp.p > 1.0 && sp.p < std::numeric_limits<double>::infinity()))
    throw DomainError(fmt::format("space: p={} outside (1,inf)", sp.p));
  if (!(sp.q >= 1.0)) throw DomainError(fmt::format("space: q={} outside [1,inf]", sp.q));
  if (!std::isfinite(sp.s)) throw DomainError("space: s must be finite");
}

/// phi(0+), read off just above zero.
inline double phi_at_zero(const BernsteinFunction& phi) { return phi(1e-300); }

namespace detail {

inline double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / x), b = std::exp(-1.0 / (1.0 - x));
  return a / (a + b);
}

} // namespace detail

class DyadicPartition {
public:
  /// Transition width of the profile in octaves.
  static constexpr double transition = 0.2;
  static constexpr int min_blocks = 6;

  explicit DyadicPartition(TorusGrid grid) : grid_(std::move(grid)) {
    j_max_ = static_cast<int>(std::floor(std::log2(grid_.xi_max()))) - 1;
    j_min_hom_ = static_cast<int>(std::ceil(std::log2(grid_.dxi()))) + 1;
  }

  const TorusGrid& grid() const { return grid_; }
  int j_max() const { return j_max_; }
  int j_min(bool homogeneous) const { return homogeneous ? j_min_hom_ : 1; }

  void require_resolution(bool homogeneous) const {
    if (j_max_ - j_min(homogeneous) < min_blocks)
      throw RangeError(fmt::format("resolved dyadic range [{}, {}] spans fewer than {} blocks; refine the grid",
                                   j_min(homogeneous), j_max_, min_blocks));
  }

  static double profile(double rho) {
    if (rho <= -1.0 || rho >= 1.0) return 0.0;
    if (rho <= 0.0) return rise(rho);
    return 1.0 - rise(rho - 1.0);
  }

  /// psi_j(|xi|).
  static double psi(int j, double r) { return r > 0.0 ? profile(std::log2(r) - j) : 0.0; }

  /// 1 - sum_{j >= 1} psi_j.
  static double chi(double r) {
    if (r <= 0.0) return 1.0;
    const double rho = std::log2(r);
    return rho >= 1.0 ? 0.0 : 1.0 - rise(rho - 1.0);
  }

private:
  static double rise(double rho) { return detail::smooth_step((rho + 0.5) / transition + 0.5); }

  TorusGrid grid_;
  int j_max_ = 0, j_min_hom_ = 0;
};

inline SpectralField lp_block(const SpectralField& f, int j, const DyadicPartition& part) {
  if (j < part.j_min(true) || j > part.j_max())
    throw RangeError(fmt::format("lp_block: j={} outside resolved range [{}, {}]", j, part.j_min(true), part.j_max()));
  return apply_radial(f, [j](double r) { return cplx{DyadicPartition::psi(j, r)}; });
}

inline SpectralField low_pass(const SpectralField& f) {
  return apply_radial(f, [](double r) { return cplx{DyadicPartition::chi(r)}; });
}

namespace detail {

inline double block_weight(const SpaceSpec& sp, int j) {
  return sp.s == 0.0 ? 1.0 : std::pow(sp.phi(std::exp2(2.0 * j)), 0.5 * sp.s);
}

inline double lq_combine(std::span<const double> terms, double q) {
  if (std::isinf(q)) return terms.empty() ? 0.0 : *std::max_element(terms.begin(), terms.end());
  double scale = 0.0;
  for (double t : terms) scale = std::max(scale, t);
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (double t : terms) acc += std::pow(t / scale, q);
  return scale * std::pow(acc, 1.0 / q);
}

} // namespace detail

/// ||chi * f||_p + l^q_j ( phi(4^j)^(s/2) ||Delta_j f||_p ); the low-pass term is dropped when homogeneous.
inline double besov_norm(const SpectralField& f, const SpaceSpec& sp, const DyadicPartition& part) {
  validate(sp);
  part.require_resolution(sp.homogeneous);
  std::vector<double> terms;
  for (int j = part.j_min(sp.homogeneous); j <= part.j_max(); ++j)
    terms.push_back(detail::block_weight(sp, j) * lp_norm(lp_block(f, j, part), sp.p));
  double norm = detail::lq_combine(terms, sp.q);
  if (!sp.homogeneous) norm += lp_norm(low_pass(f), sp.p);
  return norm;
}

/// || l^q_j ( phi(4^j)^(s/2) |Delta_j f| ) ||_p, plus ||chi * f||_p when inhomogeneous.
inline double triebel_norm(const SpectralField& f, const SpaceSpec& sp, const DyadicPartition& part) {
  validate(sp);
  part.require_resolution(sp.homogeneous);
  const std::size_t size = f.grid().size();
  std::vector<std::vector<double>> blocks;
  for (int j = part.j_min(sp.homogeneous); j <= part.j_max(); ++j) {
    const auto b = lp_block(f, j, part);
    const double w = detail::block_weight(sp, j);
    std::vector<double> mag(size);
    for (std::size_t i = 0; i < size; ++i) mag[i] = w * std::abs(b.values()[i]);
    blocks.push_back(std::move(mag));
  }
  std::vector<cplx> pointwise(size);
  std::vector<double> column(blocks.size());
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t b = 0; b < blocks.size(); ++b) column[b] = blocks[b][i];
    pointwise[i] = detail::lq_combine(column, sp.q);
  }
  double norm = lp_norm(pointwise, f.grid().cell(), sp.p);
  if (!sp.homogeneous) norm += lp_norm(low_pass(f), sp.p);
  return norm;
}

inline double space_norm(const SpectralField& f, const SpaceSpec& sp, const DyadicPartition& part) {
  return sp.kind == SpaceKind::besov ? besov_norm(f, sp, part) : triebel_norm(f, sp, part);
}

/// (I + phi(-Laplacian))^(nu/2) f.
inline SpectralField bessel_potential(const SpectralField& f, double nu, const BernsteinFunction& phi) {
  if (nu == 0.0) return f;
  const cplx zero = std::pow(1.0 + phi_at_zero(phi), 0.5 * nu);
  return apply_radial(f, [&](double r) { return cplx{std::pow(1.0 + phi(r * r), 0.5 * nu)}; }, zero);
}

inline double sobolev_phi_norm(const SpectralField& f, double s, double p, const BernsteinFunction& phi) {
  return lp_norm(bessel_potential(f, s, phi), p);
}

namespace detail {

inline constexpr double relation_tol = 1e-10;

inline double ratio_or_zero(double num, double den) { return (num == 0.0 && den == 0.0) ? 0.0 : num / den; }

inline void same_family(const SpaceSpec& a, const SpaceSpec& b, const char* what) {
  if (a.kind != b.kind || a.homogeneous != b.homogeneous || a.phi.name() != b.phi.name())
    throw ConstraintError(fmt::format("{}: spaces must share kind, homogeneity and phi", what));
}

} // namespace detail

/// ||f||_target / ||f||_source after checking delta s0 - d/p0 = delta s - d/p and the exponent order.
inline double check_embedding(const SpectralField& f, const SpaceSpec& source, const SpaceSpec& target,
                              const DyadicPartition& part) {
  detail::same_family(source, target, "check_embedding");
  const double delta = source.phi.delta();
  const double d = f.grid().d();
  const double lhs = delta * source.s - d / source.p, rhs = delta * target.s - d / target.p;
  if (std::abs(lhs - rhs) > detail::relation_tol)
    throw ConstraintError(fmt::format("check_embedding: delta*s0 - d/p0 = {} differs from delta*s - d/p = {}", lhs, rhs));
  if (source.kind == SpaceKind::besov) {
    if (!(source.p <= target.p)) throw ConstraintError(fmt::format("check_embedding: need p0={} <= p={}", source.p, target.p));
    if (!(source.q <= target.q)) throw ConstraintError(fmt::format("check_embedding: need q0={} <= q={}", source.q, target.q));
  } else if (!(source.p < target.p) && !(source.p == target.p && source.s == target.s && source.q <= target.q)) {
    throw ConstraintError(fmt::format("check_embedding: need p0={} < p={}", source.p, target.p));
  }
  return detail::ratio_or_zero(space_norm(f, target, part), space_norm(f, source, part));
}

/// ||f||_target / (||f||_end0^theta ||f||_end1^(1-theta)) for Triebel-Lizorkin spaces,
/// ends taken with q = infinity.
inline double check_gn(const SpectralField& f, const SpaceSpec& target, const SpaceSpec& end0,
                       const SpaceSpec& end1, double theta, const DyadicPartition& part) {
  if (!(theta > 0.0 && theta < 1.0)) throw ConstraintError(fmt::format("check_gn: theta={} outside (0,1)", theta));
  for (const auto* sp : {&target, &end0, &end1})
    if (sp->kind != SpaceKind::triebel) throw ConstraintError("check_gn: all three spaces must be Triebel-Lizorkin");
  detail::same_family(target, end0, "check_gn");
  detail::same_family(target, end1, "check_gn");
  if (!std::isinf(end0.q) || !std::isinf(end1.q)) throw ConstraintError("check_gn: end spaces need q = infinity");
  const double delta = target.phi.delta();
  const double d = f.grid().d();
  const double lhs = delta * target.s - d / target.p;
  const double rhs = (delta * end0.s - d / end0.p) * theta + (delta * end1.s - d / end1.p) * (1.0 - theta);
  if (std::abs(lhs - rhs) > detail::relation_tol)
    throw ConstraintError(fmt::format("check_gn: scaling relation fails ({} vs {})", lhs, rhs));
  const double mix = theta * end0.s + (1.0 - theta) * end1.s;
  if (target.s > mix + detail::relation_tol)
    throw ConstraintError(fmt::format("check_gn: s={} exceeds theta*s0 + (1-theta)*s1 = {}", target.s, mix));
  if (std::abs(target.s - mix) <= detail::relation_tol && std::abs(end0.s - end1.s) <= detail::relation_tol)
    throw ConstraintError("check_gn: s = theta*s0 + (1-theta)*s1 requires s0 != s1");
  const double num = space_norm(f, target, part);
  const double den = std::pow(space_norm(f, end0, part), theta) * std::pow(space_norm(f, end1, part), 1.0 - theta);
  return detail::ratio_or_zero(num, den);
}

} // namespace fraclab
