#pragma once

// Picard iteration for the mild formulation
//   w(t) = S(t) w0 + (1/i) int_0^t (t - s)^(a-1) P(t - s) g(w(s)) ds,   g(w) = lambda_g |w|^kappa w,
// carried out mode by mode in coefficient space on a graded time mesh.
//
// The Duhamel integral uses product integration: g is interpolated linearly in time on
// each panel and integrated exactly against the full kernel K(u) = u^(a-1) E_{a,a}(-i lambda u^a),
// whose moments are
//   F0(s) = int_0^s K     = s^a     E_{a,a+1}(-i lambda s^a)
//   G(s)  = int_0^s F0    = s^(a+1) E_{a,a+2}(-i lambda s^a).

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "fraclab/bernstein.hpp"
#include "fraclab/error.hpp"
#include "fraclab/grid.hpp"
#include "fraclab/mittag_leffler.hpp"
#include "fraclab/operators.hpp"
#include "fraclab/parallel.hpp"
#include "fraclab/spaces.hpp"

namespace fraclab {

struct Nonlinearity {
  double kappa = 2.0;
  cplx coeff{1.0, 0.0};

  cplx operator()(cplx w) const {
    const double m = std::abs(w);
    return m == 0.0 ? cplx{} : coeff * std::pow(m, kappa) * w;
  }
};

struct TimeMesh {
  double horizon = 1.0;
  int steps = 32;
  double grading = 1.0;

  std::vector<double> nodes() const { return graded_mesh(horizon, steps, grading); }
};

/// Default grading 2/alpha near t = 0.
inline TimeMesh default_mesh(double horizon, int steps, double alpha) { return {horizon, steps, 2.0 / alpha}; }

struct SolveConfig {
  double alpha = 0.5;
  BernsteinFunction phi = BernsteinFunction::power(1.0);
  AdmissibleTriple triple;
  double p0 = 2.0;
  /// Filled in by make_solve_config as (d/p0 - d/p) / delta.
  double gamma0 = 0.0;
  double tol_picard = 1e-8;
  int max_iter = 60;
  TimeMesh mesh;
  Nonlinearity nonlinearity;
};

/// Checks the admissible triple and 1 < p <= p0 <= r < inf, and fills q and gamma0.
inline SolveConfig make_solve_config(SolveConfig cfg, int d) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw DomainError(fmt::format("solver: alpha={} outside (0,1)", cfg.alpha));
  const double delta = cfg.phi.delta();
  auto& tr = cfg.triple;
  tr.d = d;
  tr.delta = delta;
  tr.q = admissible_q(tr.p, tr.r, d, delta);
  if (!(tr.p <= cfg.p0 && cfg.p0 <= tr.r && std::isfinite(tr.r)))
    throw ConstraintError(fmt::format("solver: need 1 < p <= p0 <= r < inf (p={}, p0={}, r={})", tr.p, cfg.p0, tr.r));
  cfg.gamma0 = (d / cfg.p0 - d / tr.p) / delta;
  if (!(cfg.nonlinearity.kappa > 0.0)) throw DomainError("solver: kappa must be positive");
  if (!(cfg.tol_picard > 0.0) || cfg.max_iter < 1) throw DomainError("solver: bad Picard tolerance or iteration cap");
  if (cfg.mesh.steps < 1 || !(cfg.mesh.horizon > 0.0) || !(cfg.mesh.grading >= 1.0))
    throw DomainError("solver: bad time mesh");
  return cfg;
}

struct Condition {
  std::string name;
  bool holds = false;
};

struct ConditionReport {
  std::vector<Condition> items;
  bool all() const {
    return std::all_of(items.begin(), items.end(), [](const Condition& c) { return c.holds; });
  }
  std::string failed() const {
    std::string s;
    for (const auto& c : items)
      if (!c.holds) s += (s.empty() ? "" : "; ") + c.name;
    return s;
  }
};

namespace detail {

inline ConditionReport existence_conditions(const SolveConfig& cfg, int d, bool global) {
  const double p = cfg.triple.p, r = cfg.triple.r, p0 = cfg.p0;
  const double k = cfg.nonlinearity.kappa, delta = cfg.phi.delta();
  const double crit = d * k / (2.0 * delta);
  ConditionReport rep;
  rep.items.push_back({"(1+kappa) v p < r", std::max(1.0 + k, p) < r});
  rep.items.push_back({"r < p(1+kappa)", r < p * (1.0 + k)});
  if (global) {
    rep.items.push_back({"1 < d kappa/(2 delta)", 1.0 < crit});
    rep.items.push_back({"d kappa/(2 delta) = p", std::abs(crit - p) <= 1e-12 * p});
  } else {
    rep.items.push_back({"1 v d kappa/(2 delta) < p", std::max(1.0, crit) < p});
  }
  rep.items.push_back({"p < p0 <= r", p < p0 && p0 <= r});
  rep.items.push_back({"d/p - 2 delta/(1+kappa) < d/r", d / p - 2.0 * delta / (1.0 + k) < d / r});
  rep.items.push_back({"d/r < 2 delta/kappa", d / r < 2.0 * delta / k});
  return rep;
}

} // namespace detail

/// Parameter relations required for local existence.
inline ConditionReport local_conditions(const SolveConfig& cfg, int d) { return detail::existence_conditions(cfg, d, false); }

/// Parameter relations required for small-data global existence.
inline ConditionReport global_conditions(const SolveConfig& cfg, int d) { return detail::existence_conditions(cfg, d, true); }

/// kappa with d kappa / (2 delta) = p.
inline double global_kappa(int d, double delta, double p) { return 2.0 * delta * p / d; }

enum class SobolevTheorem { lifted_pair, single_space };

struct Window {
  double lo, hi;
  bool lo_open, hi_open;
  bool contains(double s) const { return (lo_open ? s > lo : s >= lo) && (hi_open ? s < hi : s <= hi); }
};

/// Admissible smoothness window for w0 in H^{s,phi}_p. lifted_pair also requires
/// p > d/(2 delta) and d(2 kappa + 1)/(delta p (kappa + 1)) < 2.
inline Window sobolev_window(SobolevTheorem th, int d, double delta, double p, double kappa) {
  if (th == SobolevTheorem::lifted_pair) {
    if (!(p > d / (2.0 * delta)))
      throw ConstraintError(fmt::format("sobolev window: need p > d/(2 delta) = {}", d / (2.0 * delta)));
    const double c = d * (2.0 * kappa + 1.0) / (delta * p * (kappa + 1.0));
    if (!(c < 2.0)) throw ConstraintError(fmt::format("sobolev window: d(2k+1)/(delta p (k+1)) = {} must be < 2", c));
    return {std::max(0.0, (kappa + 1.0) * d / (kappa * delta * p) - 2.0 / kappa),
            d * kappa / (delta * p * (kappa + 1.0)), true, false};
  }
  return {d * kappa / (delta * p * (kappa + 1.0)), std::min(d / (p * delta), 2.0), false, true};
}

/// lambda_g |f|^kappa f, then the 2/3 rule: coefficients with |k_a| > n/3 on any axis are zeroed.
inline SpectralField g_apply(const SpectralField& f, const Nonlinearity& nl) {
  const auto& g = f.grid();
  std::vector<cplx> v(f.values().begin(), f.values().end());
  for (auto& x : v) x = nl(x);
  SpectralField raw(g, std::move(v));
  std::vector<cplx> c(raw.coefficients().begin(), raw.coefficients().end());
  const int cut = g.n() / 3;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto pos = g.unflatten(i);
    for (int a = 0; a < g.d(); ++a)
      if (std::abs(g.wavenumber(pos[a])) > cut) {
        c[i] = 0.0;
        break;
      }
  }
  return to_physical(std::move(c), g);
}

/// max over samples of |g(u) - g(w)| / ((|u|^kappa + |w|^kappa) |u - w|).
inline double h2_ratio(const Nonlinearity& nl, std::span<const std::pair<cplx, cplx>> samples) {
  double worst = 0.0;
  for (const auto& [u, w] : samples) {
    const double den = (std::pow(std::abs(u), nl.kappa) + std::pow(std::abs(w), nl.kappa)) * std::abs(u - w);
    if (den > 0.0) worst = std::max(worst, std::abs(nl(u) - nl(w)) / den);
  }
  return worst;
}

/// Product-integration weights: D(t_m) = sum_j W[m][j] . ghat_j mode by mode, 1/i included.
class DuhamelWeights {
public:
  DuhamelWeights(const TorusGrid& g, std::vector<double> nodes, double alpha, const BernsteinFunction& phi)
      : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2 || nodes_.front() != 0.0) throw DomainError("Duhamel weights: mesh must start at 0");
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      if (!(nodes_[i] > nodes_[i - 1])) throw DomainError("Duhamel weights: negative or empty panel");
    // one weight set per distinct |k|^2 inside the dealiased support
    const auto& ksq = g.k_squared();
    const int cut = g.n() / 3;
    std::unordered_map<std::int64_t, int> key_of;
    slot_key_.assign(ksq.size(), -1);
    for (std::size_t i = 0; i < ksq.size(); ++i) {
      const auto pos = g.unflatten(i);
      bool inside = true;
      for (int a = 0; a < g.d(); ++a) inside = inside && std::abs(g.wavenumber(pos[a])) <= cut;
      if (!inside) continue;
      auto [it, fresh] = key_of.emplace(ksq[i], static_cast<int>(lambdas_.size()));
      if (fresh) {
        const double r = g.dxi() * std::sqrt(static_cast<double>(ksq[i]));
        lambdas_.push_back(ksq[i] == 0 ? phi_at_zero(phi) : phi(r * r));
      }
      slot_key_[i] = it->second;
    }
    const std::size_t M = nodes_.size() - 1, K = lambdas_.size();
    // row m holds (m+1) * K weights
    offset_.assign(M + 2, 0);
    for (std::size_t m = 0; m <= M; ++m) offset_[m + 1] = offset_[m] + (m + 1) * K;
    w_.assign(offset_[M + 1], cplx{});
    parallel_for(M, [&](std::size_t idx) { fill_row(idx + 1, alpha); });
  }

  std::span<const double> nodes() const { return nodes_; }
  std::size_t keys() const { return lambdas_.size(); }

  /// Duhamel term at node m from coefficient history ghat[0..m].
  std::vector<cplx> apply(std::size_t m, std::span<const std::vector<cplx>> ghat) const {
    if (ghat.size() < m + 1) throw RangeError("duhamel: history shorter than target node");
    std::vector<cplx> out(slot_key_.size());
    if (m == 0) return out;
    const std::size_t K = lambdas_.size();
    for (std::size_t j = 0; j <= m; ++j) {
      const cplx* row = &w_[offset_[m] + j * K];
      const auto& gj = ghat[j];
      for (std::size_t i = 0; i < out.size(); ++i)
        if (slot_key_[i] >= 0) out[i] += row[slot_key_[i]] * gj[i];
    }
    return out;
  }

private:
  void fill_row(std::size_t m, double alpha) {
    const std::size_t K = lambdas_.size();
    std::vector<double> s(m + 1);
    for (std::size_t j = 0; j <= m; ++j) s[j] = nodes_[m] - nodes_[j];
    std::vector<cplx> f0(m + 1), gg(m + 1);
    const cplx minus_i{0.0, -1.0};
    for (std::size_t k = 0; k < K; ++k) {
      const double lam = lambdas_[k];
      for (std::size_t j = 0; j < m; ++j) {
        const double sa = std::pow(s[j], alpha);
        const cplx z{0.0, -lam * sa};
        f0[j] = sa * ml_eval(MLQuery{alpha, alpha + 1.0, z});
        gg[j] = sa * s[j] * ml_eval(MLQuery{alpha, alpha + 2.0, z});
      }
      f0[m] = gg[m] = 0.0;
      cplx* row = &w_[offset_[m]];
      for (std::size_t j = 0; j < m; ++j) {
        // panel [t_j, t_{j+1}]  <->  u in [s_{j+1}, s_j]
        const double h = s[j] - s[j + 1];
        const cplx jmom = h * f0[j] - (gg[j] - gg[j + 1]);
        const cplx left = jmom / h;
        const cplx right = (f0[j] - f0[j + 1]) - left;
        row[j * K + k] += minus_i * left;
        row[(j + 1) * K + k] += minus_i * right;
      }
    }
  }

  std::vector<double> nodes_;
  std::vector<double> lambdas_;
  std::vector<int> slot_key_;
  std::vector<std::size_t> offset_;
  std::vector<cplx> w_;
};

namespace detail {

inline std::shared_ptr<const DuhamelWeights> cached_weights(const TorusGrid& g, const std::vector<double>& nodes,
                                                            double alpha, const BernsteinFunction& phi) {
  using Key = std::tuple<int, int, double, std::vector<double>, double, std::string>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const DuhamelWeights>> cache;
  Key key{g.d(), g.n(), g.length(), nodes, alpha, phi.name()};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto w = std::make_shared<const DuhamelWeights>(g, nodes, alpha, phi);
  std::lock_guard lock(mutex);
  return cache.emplace(std::move(key), std::move(w)).first->second;
}

} // namespace detail

/// Duhamel term at the last node of `nodes` for a history of g-values at every node.
inline SpectralField duhamel_convolve(std::span<const SpectralField> history, std::span<const double> nodes,
                                      double alpha, const BernsteinFunction& phi) {
  if (history.empty()) throw RangeError("duhamel_convolve: empty history");
  if (history.size() != nodes.size()) throw ShapeError("duhamel_convolve: history and mesh sizes differ");
  const auto& g = history.front().grid();
  const auto w = detail::cached_weights(g, {nodes.begin(), nodes.end()}, alpha, phi);
  std::vector<std::vector<cplx>> ghat;
  for (const auto& h : history) ghat.emplace_back(h.coefficients().begin(), h.coefficients().end());
  return to_physical(w->apply(nodes.size() - 1, ghat), g);
}

struct SolutionTrajectory {
  std::vector<double> t;
  std::vector<SpectralField> w;
  /// Relative X-distance between successive iterates.
  std::vector<double> distances;
  /// distances[k] / distances[k-1].
  std::vector<double> ratios;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

/// sup_t ||w(t)||_{hom. B^{gamma0}_{p0,inf}} + sup_{t>0} t^(alpha/q) ||w(t)||_{L^r}; the second
/// supremum starts at the smallest positive node.
inline double xalpha_norm(std::span<const SpectralField> w, std::span<const double> t, const SolveConfig& cfg) {
  if (w.size() != t.size() || w.empty()) throw ShapeError("xalpha_norm: fields and times differ in length");
  const DyadicPartition part(w.front().grid());
  const SpaceSpec besov{SpaceKind::besov, cfg.gamma0, cfg.p0, std::numeric_limits<double>::infinity(), true, cfg.phi};
  const double expo = std::isinf(cfg.triple.q) ? 0.0 : cfg.alpha / cfg.triple.q;
  double first = 0.0, second = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    first = std::max(first, besov_norm(w[m], besov, part));
    if (t[m] > 0.0) second = std::max(second, std::pow(t[m], expo) * lp_norm(w[m], cfg.triple.r));
  }
  return first + second;
}

inline double xalpha_norm(const SolutionTrajectory& traj, const SolveConfig& cfg) {
  return xalpha_norm(traj.w, traj.t, cfg);
}

namespace detail {

inline std::vector<SpectralField> subtract(std::span<const SpectralField> a, std::span<const SpectralField> b) {
  std::vector<SpectralField> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(a[i] - b[i]);
  return out;
}

inline std::vector<std::vector<cplx>> g_history(std::span<const SpectralField> w, const Nonlinearity& nl) {
  std::vector<std::vector<cplx>> out(w.size());
  parallel_for(w.size(), [&](std::size_t j) {
    const auto gj = g_apply(w[j], nl);
    out[j].assign(gj.coefficients().begin(), gj.coefficients().end());
  });
  return out;
}

} // namespace detail

/// Iterates w <- S(t) w0 + Duhamel(g(w)) from w = S(t) w0 until the relative X-distance of
/// successive iterates drops below tol_picard. Divergence is flagged, not thrown.
inline SolutionTrajectory picard_solve(const SpectralField& w0, const SolveConfig& cfg) {
  const auto& g = w0.grid();
  const auto nodes = cfg.mesh.nodes();
  const std::size_t M = nodes.size() - 1;
  SolutionTrajectory traj;
  traj.t = nodes;

  std::vector<SpectralField> base(M + 1, w0);
  parallel_for(M, [&](std::size_t i) {
    base[i + 1] = apply_S(w0, PropagatorQuery{cfg.alpha, cfg.phi, nodes[i + 1], 0.0, 0.0});
  });
  traj.w = base;

  const bool linear = cfg.nonlinearity.coeff == cplx{};
  std::shared_ptr<const DuhamelWeights> weights;
  if (!linear) weights = detail::cached_weights(g, nodes, cfg.alpha, cfg.phi);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    std::vector<SpectralField> next = base;
    if (!linear) {
      const auto ghat = detail::g_history(traj.w, cfg.nonlinearity);
      parallel_for(M, [&](std::size_t i) {
        const std::size_t m = i + 1;
        auto d = weights->apply(m, ghat);
        const auto b = base[m].coefficients();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += b[k];
        next[m] = to_physical(std::move(d), g);
      });
    }
    const double size = xalpha_norm(next, nodes, cfg);
    const double gap = xalpha_norm(detail::subtract(next, traj.w), nodes, cfg);
    const double dist = size > 0.0 ? gap / size : gap;
    if (!traj.distances.empty()) traj.ratios.push_back(dist / traj.distances.back());
    traj.distances.push_back(dist);
    traj.iterations = it;
    if (!std::isfinite(dist) || dist > 1e6) {
      traj.diverged = true;
      return traj;
    }
    traj.w = std::move(next);
    if (dist < cfg.tol_picard) {
      traj.converged = true;
      return traj;
    }
  }
  traj.diverged = true;
  return traj;
}

/// max_m ||w(t_m) - S(t_m) w0 - D(t_m)||_2 / max_m ||w(t_m)||_2 with D evaluated on the mesh
/// with every panel halved and w interpolated linearly at the new nodes.
inline double mild_residual(const SolutionTrajectory& traj, const SolveConfig& cfg) {
  const std::size_t M = traj.t.size() - 1;
  const auto& g = traj.w.front().grid();
  const auto& w0 = traj.w.front();
  std::vector<double> fine(2 * M + 1);
  std::vector<SpectralField> wf(2 * M + 1, w0);
  for (std::size_t m = 0; m <= M; ++m) {
    fine[2 * m] = traj.t[m];
    wf[2 * m] = traj.w[m];
    if (m < M) {
      fine[2 * m + 1] = 0.5 * (traj.t[m] + traj.t[m + 1]);
      wf[2 * m + 1] = (traj.w[m] + traj.w[m + 1]).scaled(0.5);
    }
  }
  const bool linear = cfg.nonlinearity.coeff == cplx{};
  std::shared_ptr<const DuhamelWeights> weights;
  std::vector<std::vector<cplx>> ghat;
  if (!linear) {
    weights = detail::cached_weights(g, fine, cfg.alpha, cfg.phi);
    ghat = detail::g_history(wf, cfg.nonlinearity);
  }
  auto l2 = [](std::span<const cplx> c) {
    double s = 0.0;
    for (const auto& v : c) s += std::norm(v);
    return std::sqrt(s);
  };
  std::vector<double> defect(M + 1, 0.0), size(M + 1, 0.0);
  parallel_for(M + 1, [&](std::size_t m) {
    const auto wc = traj.w[m].coefficients();
    size[m] = l2(wc);
    std::vector<cplx> r(wc.begin(), wc.end());
    if (m > 0) {
      const auto s = apply_S(w0, PropagatorQuery{cfg.alpha, cfg.phi, traj.t[m], 0.0, 0.0});
      const auto sc = s.coefficients();
      for (std::size_t k = 0; k < r.size(); ++k) r[k] -= sc[k];
      if (!linear) {
        const auto d = weights->apply(2 * m, ghat);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= d[k];
      }
    } else {
      const auto c0 = w0.coefficients();
      for (std::size_t k = 0; k < r.size(); ++k) r[k] -= c0[k];
    }
    defect[m] = l2(r);
  });
  const double top = *std::max_element(size.begin(), size.end());
  const double worst = *std::max_element(defect.begin(), defect.end());
  return top > 0.0 ? worst / top : worst;
}

/// ||traj - traj'||_X / ||w0 - w0'||_{hom. B^{gamma0}_{p0,inf}}; 0/0 is reported as 0.
inline double data_lipschitz_probe(const SpectralField& w0, const SpectralField& w0p, const SolveConfig& cfg) {
  const auto a = picard_solve(w0, cfg);
  const auto b = picard_solve(w0p, cfg);
  if (!a.converged || !b.converged)
    throw ConvergenceError(fmt::format("lipschitz probe: Picard iteration did not converge ({} / {} iterations)",
                                       a.iterations, b.iterations));
  const double num = xalpha_norm(detail::subtract(a.w, b.w), a.t, cfg);
  const DyadicPartition part(w0.grid());
  const SpaceSpec besov{SpaceKind::besov, cfg.gamma0, cfg.p0, std::numeric_limits<double>::infinity(), true, cfg.phi};
  const double den = besov_norm(w0 - w0p, besov, part);
  return (num == 0.0 && den == 0.0) ? 0.0 : num / den;
}

struct DifferenceRow {
  double t = 0.0;
  double besov = 0.0;
  double weighted_lr = 0.0;
  double J = 0.0;
};

/// J(t) = ||u - w||_{hom. B^{gamma0}_{p0,inf}} + t^(alpha/q) ||u - w||_{L^r} on the mesh, for the
/// global-existence parameter regime. A finite-horizon table only.
inline std::vector<DifferenceRow> asymptotic_difference_probe(const SpectralField& u0, const SpectralField& w0,
                                                              const SolveConfig& cfg) {
  const auto rep = global_conditions(cfg, u0.grid().d());
  if (!rep.all()) throw ConstraintError(fmt::format("asymptotic probe: global regime fails: {}", rep.failed()));
  const auto a = picard_solve(u0, cfg);
  const auto b = picard_solve(w0, cfg);
  if (!a.converged || !b.converged) throw ConvergenceError("asymptotic probe: Picard iteration did not converge");
  const DyadicPartition part(u0.grid());
  const SpaceSpec besov{SpaceKind::besov, cfg.gamma0, cfg.p0, std::numeric_limits<double>::infinity(), true, cfg.phi};
  const double expo = std::isinf(cfg.triple.q) ? 0.0 : cfg.alpha / cfg.triple.q;
  std::vector<DifferenceRow> rows;
  for (std::size_t m = 0; m < a.t.size(); ++m) {
    const auto diff = a.w[m] - b.w[m];
    DifferenceRow row{a.t[m], besov_norm(diff, besov, part), 0.0, 0.0};
    row.weighted_lr = a.t[m] > 0.0 ? std::pow(a.t[m], expo) * lp_norm(diff, cfg.triple.r) : 0.0;
    row.J = row.besov + row.weighted_lr;
    rows.push_back(row);
  }
  return rows;
}

/// Per-node ||w(t_m)||_{H^{s,phi}_p}.
inline std::vector<double> sobolev_track(const SolutionTrajectory& traj, double s, double p, const BernsteinFunction& phi) {
  std::vector<double> out;
  for (const auto& w : traj.w) out.push_back(sobolev_phi_norm(w, s, p, phi));
  return out;
}

} // namespace fraclab
