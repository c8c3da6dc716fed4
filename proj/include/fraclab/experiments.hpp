#pragma once

// Config-driven experiment runner. A run config is a JSON object with the sections
// {grid, phi, mlf, spaces, operator, solver, output}, a seed, a deterministic flag and an
// experiment list. Sections hold defaults for the experiments of their family; each
// experiment may override any of them, including grid and phi. Everything is validated
// before the first computation. Outputs are CSV files plus manifest.json, written last.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fraclab/bernstein.hpp"
#include "fraclab/error.hpp"
#include "fraclab/grid.hpp"
#include "fraclab/mittag_leffler.hpp"
#include "fraclab/operators.hpp"
#include "fraclab/parallel.hpp"
#include "fraclab/snapshot.hpp"
#include "fraclab/solver.hpp"
#include "fraclab/spaces.hpp"

namespace fraclab {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr std::string_view tool_name = "fraclab";
inline constexpr std::string_view tool_version = "1.0.0";

/// Config does not match the schema; maps to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

namespace config {

using Keys = std::vector<std::string_view>;

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
}

inline void check_keys(const json& j, const std::string& where, const Keys& allowed) {
  require_object(j, where);
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
}

template <class T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}.{}: wrong type ({})", where, key, j.at(key).type_name()));
  }
}

template <class T>
T need(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(fmt::format("{}: missing required key '{}'", where, key));
  return get<T>(j, key, where, T{});
}

/// A number, or the string "inf".
inline double get_extended(const json& j, const char* key, const std::string& where, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!v.is_number()) throw ConfigError(fmt::format("{}.{}: expected a number or \"inf\"", where, key));
  return v.get<double>();
}

inline cplx as_complex(const json& v, const std::string& where) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(fmt::format("{}: expected a number or [re, im]", where));
  return {v[0].get<double>(), v[1].get<double>()};
}

inline std::vector<double> get_list(const json& j, const char* key, const std::string& where,
                                    std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(fmt::format("{}.{}: expected a list of numbers", where, key));
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(fmt::format("{}.{}: expected a list of numbers", where, key));
    out.push_back(x.get<double>());
  }
  if (out.empty()) throw ConfigError(fmt::format("{}.{}: empty list", where, key));
  return out;
}

template <class F>
auto guarded(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(fmt::format("{}: {}", where, e.what()));
  }
}

inline TorusGrid parse_grid(const json& j, const std::string& where) {
  check_keys(j, where, {"d", "n", "L"});
  const int d = get<int>(j, "d", where, 1);
  const int n = need<int>(j, "n", where);
  const double length = get<double>(j, "L", where, 2.0 * std::numbers::pi);
  return guarded(where, [&] { return TorusGrid(d, n, length); });
}

inline BernsteinFunction parse_phi(const json& j, const std::string& where) {
  check_keys(j, where, {"family", "gamma", "gamma1", "gamma2", "m", "beta", "drift"});
  const auto family = get<std::string>(j, "family", where, "power");
  return guarded(where, [&] {
    BernsteinFunction phi = BernsteinFunction::power(1.0);
    if (family == "power")
      phi = BernsteinFunction::power(get<double>(j, "gamma", where, 1.0));
    else if (family == "power_sum")
      phi = BernsteinFunction::power_sum(need<double>(j, "gamma1", where), need<double>(j, "gamma2", where));
    else if (family == "relativistic")
      phi = BernsteinFunction::relativistic(need<double>(j, "gamma", where), need<double>(j, "m", where));
    else if (family == "log_damped")
      phi = BernsteinFunction::log_damped(need<double>(j, "beta", where));
    else
      throw ConfigError(fmt::format("{}.family: unknown Bernstein family '{}'", where, family));
    const double drift = get<double>(j, "drift", where, 0.0);
    return drift > 0.0 ? phi.with_drift(drift) : phi;
  });
}

inline SpaceSpec parse_space(const json& j, const std::string& where, bool homogeneous, const BernsteinFunction& phi) {
  check_keys(j, where, {"kind", "s", "p", "q"});
  const auto kind = get<std::string>(j, "kind", where, "besov");
  if (kind != "besov" && kind != "triebel") throw ConfigError(fmt::format("{}.kind: '{}' is not besov|triebel", where, kind));
  SpaceSpec sp{kind == "besov" ? SpaceKind::besov : SpaceKind::triebel, get<double>(j, "s", where, 0.0),
               need<double>(j, "p", where), get_extended(j, "q", where, 2.0), homogeneous, phi};
  guarded(where, [&] {
    validate(sp);
    return 0;
  });
  return sp;
}

} // namespace config

struct Outcome {
  std::vector<std::string> outputs;
  json summary = json::object();
  bool diverged = false;
};

/// One validated experiment; run() writes its files into the output directory.
struct Plan {
  std::string id;
  std::string type;
  std::function<Outcome(const fs::path&)> run;
};

namespace detail {

inline std::string num(double x) { return fmt::format("{:.17g}", x); }

class CsvFile {
public:
  CsvFile(const fs::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
    if (!out_) throw Error(fmt::format("cannot write {}", path.string()));
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  void values(std::initializer_list<double> xs) {
    std::vector<std::string> cells;
    for (double x : xs) cells.push_back(num(x));
    row(cells);
  }
  ~CsvFile() { out_.flush(); }

private:
  fs::path path_;
  std::ofstream out_;
};

inline std::string branch_name(MLBranch b) {
  switch (b) {
  case MLBranch::series: return "series";
  case MLBranch::integral: return "integral";
  case MLBranch::imaginary_axis: return "imaginary_axis";
  case MLBranch::contour: return "contour";
  }
  return "?";
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Keys each experiment type accepts besides id, type, grid and phi.
inline const std::map<std::string, config::Keys>& experiment_keys() {
  static const std::map<std::string, config::Keys> keys{
      {"mlf.eval", {"points", "tol"}},
      {"mlf.laplace", {"alphas", "betas", "a", "s", "tol"}},
      {"mlf.caputo", {"alphas", "lambdas", "steps", "T", "grading", "t_min"}},
      {"bernstein.check", {"orders", "x_lo", "x_hi", "samples", "cap", "k_min", "k_max", "scaling_samples"}},
      {"spaces.embedding", {"source", "target", "homogeneous", "seeds", "j_lo", "j_hi"}},
      {"spaces.gn", {"target", "end0", "end1", "theta", "homogeneous", "seeds", "j_lo", "j_hi"}},
      {"op.decay",
       {"lemma", "alpha", "p", "r", "sigma", "b", "a", "kappa", "t_lo", "t_hi", "per_decade", "fit_decades", "d"}},
      {"op.bound_probe",
       {"kind", "alpha", "sigma", "a", "p", "t_lo", "t_hi", "per_decade", "family_seed", "family_size"}},
      {"solve",
       {"alpha", "kappa", "coeff", "p", "r", "p0", "T", "steps", "grading", "tol", "max_iter", "data", "amplitude",
        "residual", "snapshots", "regime"}},
  };
  return keys;
}

inline std::string section_of(const std::string& type) {
  if (type.starts_with("mlf.")) return "mlf";
  if (type.starts_with("spaces.")) return "spaces";
  if (type.starts_with("op.")) return "operator";
  if (type == "solve") return "solver";
  return "";
}

struct Context {
  const json& root;
  std::optional<std::uint64_t> seed;
};

inline TorusGrid grid_for(const json& exp, const Context& ctx, const std::string& where) {
  if (exp.contains("grid")) return config::parse_grid(exp.at("grid"), where + ".grid");
  if (!ctx.root.contains("grid")) throw ConfigError(fmt::format("{}: needs a grid (top-level or per experiment)", where));
  return config::parse_grid(ctx.root.at("grid"), "grid");
}

inline BernsteinFunction phi_for(const json& exp, const Context& ctx, const std::string& where) {
  if (exp.contains("phi")) return config::parse_phi(exp.at("phi"), where + ".phi");
  if (ctx.root.contains("phi")) return config::parse_phi(ctx.root.at("phi"), "phi");
  return BernsteinFunction::power(1.0);
}

inline std::uint64_t seed_for(const json& p, const char* key, const Context& ctx, const std::string& where) {
  if (p.contains(key)) return config::get<std::uint64_t>(p, key, where, 0);
  if (!ctx.seed) throw ConfigError(fmt::format("{}: randomized family needs '{}' or a top-level seed", where, key));
  return *ctx.seed;
}

// Experiment planners. Each parses and validates, then returns the closure that computes.

inline Plan plan_mlf_eval(const std::string& id, const json& p, const std::string& where) {
  const double tol = config::get<double>(p, "tol", where, 1e-10);
  std::vector<MLQuery> pts;
  if (!p.contains("points") || !p.at("points").is_array())
    throw ConfigError(fmt::format("{}: 'points' must be a list of [alpha, beta, re, im]", where));
  for (const auto& q : p.at("points")) {
    if (!q.is_array() || q.size() != 4) throw ConfigError(fmt::format("{}.points: entries are [alpha, beta, re, im]", where));
    for (const auto& x : q)
      if (!x.is_number()) throw ConfigError(fmt::format("{}.points: entries must be numbers", where));
    const MLQuery mq{q[0].get<double>(), q[1].get<double>(), {q[2].get<double>(), q[3].get<double>()}, tol};
    if (!(mq.alpha > 0.0 && mq.alpha <= 1.0) || !(mq.beta > 0.0))
      throw ConfigError(fmt::format("{}.points: need 0 < alpha <= 1 and beta > 0", where));
    pts.push_back(mq);
  }
  return {id, "mlf.eval", [=](const fs::path& out) {
            Outcome o;
            CsvFile csv(out / (id + ".csv"), {"alpha", "beta", "z_re", "z_im", "value_re", "value_im", "branch"});
            for (const auto& q : pts) {
              const cplx v = ml_eval(q);
              csv.row({num(q.alpha), num(q.beta), num(q.z.real()), num(q.z.imag()), num(v.real()), num(v.imag()),
                       branch_name(ml_primary_branch(q))});
            }
            o.outputs.push_back(id + ".csv");
            o.summary["points"] = pts.size();
            return o;
          }};
}

inline Plan plan_mlf_laplace(const std::string& id, const json& p, const std::string& where) {
  const auto alphas = config::get_list(p, "alphas", where, {0.3, 0.5, 0.7});
  std::vector<std::optional<double>> betas;  // nullopt = alpha
  if (p.contains("betas")) {
    if (!p.at("betas").is_array()) throw ConfigError(fmt::format("{}.betas: expected a list", where));
    for (const auto& b : p.at("betas")) {
      if (b.is_string() && b.get<std::string>() == "alpha")
        betas.push_back(std::nullopt);
      else if (b.is_number())
        betas.push_back(b.get<double>());
      else
        throw ConfigError(fmt::format("{}.betas: entries are numbers or \"alpha\"", where));
    }
  } else {
    betas = {1.0, std::nullopt};
  }
  std::vector<cplx> as;
  if (p.contains("a")) {
    if (!p.at("a").is_array()) throw ConfigError(fmt::format("{}.a: expected a list", where));
    for (const auto& a : p.at("a")) as.push_back(config::as_complex(a, where + ".a"));
  } else {
    as = {0.5, 1.0, 2.0, cplx{0.0, 1.0}};
  }
  const auto ss = config::get_list(p, "s", where, {1.0, 2.0, 5.0, 10.0});
  const double tol = config::get<double>(p, "tol", where, 1e-9);
  for (double a : alphas)
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError(fmt::format("{}.alphas: {} outside (0,1]", where, a));
  for (double s : ss)
    if (!(s > 0.0)) throw ConfigError(fmt::format("{}.s: {} must be positive", where, s));
  return {id, "mlf.laplace", [=](const fs::path& out) {
            struct Row {
              double alpha, beta;
              cplx a;
              double s, res;
            };
            std::vector<Row> rows;
            for (double al : alphas)
              for (const auto& b : betas)
                for (const auto& a : as)
                  for (double s : ss) rows.push_back({al, b.value_or(al), a, s, 0.0});
            parallel_for(rows.size(), [&](std::size_t i) {
              rows[i].res = laplace_identity_residual(rows[i].alpha, rows[i].beta, rows[i].a, rows[i].s, tol);
            });
            Outcome o;
            CsvFile csv(out / (id + ".csv"), {"alpha", "beta", "a_re", "a_im", "s", "residual"});
            double worst = 0.0;
            for (const auto& r : rows) {
              csv.values({r.alpha, r.beta, r.a.real(), r.a.imag(), r.s, r.res});
              worst = std::max(worst, r.res);
            }
            o.outputs.push_back(id + ".csv");
            o.summary["points"] = rows.size();
            o.summary["max_residual"] = worst;
            return o;
          }};
}

inline Plan plan_mlf_caputo(const std::string& id, const json& p, const std::string& where) {
  const auto alphas = config::get_list(p, "alphas", where, {0.4, 0.7});
  const auto lambdas = config::get_list(p, "lambdas", where, {1.0, 4.0});
  const auto steps = config::get_list(p, "steps", where, {64, 128, 256, 512});
  const double horizon = config::get<double>(p, "T", where, 1.0);
  const double grading = config::get<double>(p, "grading", where, 1.0);
  const double t_min = config::get<double>(p, "t_min", where, 0.0);
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) throw ConfigError(fmt::format("{}.alphas: {} outside (0,1)", where, a));
  for (double m : steps)
    if (!(m >= 1.0) || m != std::floor(m)) throw ConfigError(fmt::format("{}.steps: {} is not a positive integer", where, m));
  if (!(horizon > 0.0) || !(grading >= 1.0)) throw ConfigError(fmt::format("{}: need T > 0 and grading >= 1", where));
  return {id, "mlf.caputo", [=](const fs::path& out) {
            Outcome o;
            CsvFile csv(out / (id + ".csv"), {"alpha", "lambda", "steps", "residual", "order"});
            double min_order = std::numeric_limits<double>::infinity();
            bool monotone = true;
            for (double a : alphas)
              for (double lam : lambdas) {
                double prev = 0.0, prev_m = 0.0;
                for (double m : steps) {
                  const double r =
                      caputo_mode_residual(a, lam, graded_mesh(horizon, static_cast<int>(m), grading), t_min);
                  const double order = prev > 0.0 ? std::log(prev / r) / std::log(m / prev_m)
                                                   : std::numeric_limits<double>::quiet_NaN();
                  if (prev > 0.0) {
                    min_order = std::min(min_order, order);
                    monotone = monotone && r < prev;
                  }
                  csv.values({a, lam, m, r, order});
                  prev = r;
                  prev_m = m;
                }
              }
            o.outputs.push_back(id + ".csv");
            o.summary["min_order"] = std::isfinite(min_order) ? json(min_order) : json(nullptr);
            o.summary["monotone"] = monotone;
            return o;
          }};
}

inline Plan plan_bernstein(const std::string& id, const json& p, const std::string& where, BernsteinFunction phi) {
  const auto orders = config::get_list(p, "orders", where, {1, 2, 3, 4});
  const double x_lo = config::get<double>(p, "x_lo", where, 1e-6), x_hi = config::get<double>(p, "x_hi", where, 1e6);
  const int samples = config::get<int>(p, "samples", where, 241);
  const double cap = config::get<double>(p, "cap", where, 100.0);
  const double k_min = config::get<double>(p, "k_min", where, 1e-20), k_max = config::get<double>(p, "k_max", where, 1e20);
  const int scaling_samples = config::get<int>(p, "scaling_samples", where, 401);
  if (!(x_lo > 0.0 && x_lo < x_hi) || samples < 2) throw ConfigError(fmt::format("{}: bad derivative grid", where));
  if (!(k_min > 0.0 && k_min < k_max) || scaling_samples < 2) throw ConfigError(fmt::format("{}: bad scaling range", where));
  for (double n : orders)
    if (n != std::floor(n) || n < 0 || n > phi.n_max())
      throw ConfigError(fmt::format("{}.orders: {} outside 0..{}", where, n, phi.n_max()));
  return {id, "bernstein.check", [=](const fs::path& out) {
            Outcome o;
            CsvFile csv(out / (id + ".csv"), {"quantity", "order", "value", "at", "pass"});
            const auto xs = log_grid(x_lo, x_hi, samples);
            bool all = true;
            for (double n : orders) {
              const auto rep = verify_derivative_bound(phi, static_cast<int>(n), xs, cap);
              csv.row({"derivative_bound", num(n), num(rep.max_ratio), num(rep.argmax), rep.pass ? "1" : "0"});
              all = all && rep.pass;
            }
            const auto si = scaling_index_estimate(phi, k_min, k_max, scaling_samples);
            csv.row({"delta_hat", "", num(si.delta_hat), "", si.delta_hat >= phi.delta() - 1e-9 ? "1" : "0"});
            csv.row({"c_hat", "", num(si.c_hat), "", si.c_hat > 0.0 ? "1" : "0"});
            o.outputs.push_back(id + ".csv");
            o.summary["phi"] = phi.name();
            o.summary["derivative_bounds_pass"] = all;
            o.summary["delta"] = phi.delta();
            o.summary["delta_hat"] = si.delta_hat;
            o.summary["c_hat"] = si.c_hat;
            return o;
          }};
}

struct SeedRange {
  std::uint64_t lo = 0, hi = 0;
};

inline SeedRange parse_seeds(const json& p, const std::string& where) {
  if (!p.contains("seeds")) throw ConfigError(fmt::format("{}: randomized family needs 'seeds': [lo, hi)", where));
  const auto& s = p.at("seeds");
  if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned() ||
      !(s[0].get<std::uint64_t>() < s[1].get<std::uint64_t>()))
    throw ConfigError(fmt::format("{}.seeds: expected [lo, hi) with lo < hi", where));
  return {s[0].get<std::uint64_t>(), s[1].get<std::uint64_t>()};
}

inline Plan plan_spaces(const std::string& id, const std::string& type, const json& p, const std::string& where,
                        const TorusGrid& g, const BernsteinFunction& phi) {
  const bool hom = config::get<bool>(p, "homogeneous", where, false);
  const auto seeds = parse_seeds(p, where);
  const DyadicPartition part(g);
  const double j_lo = config::get<double>(p, "j_lo", where, 1.5);
  const double j_hi = config::get<double>(p, "j_hi", where, part.j_max() + 0.3);
  if (!(j_lo < j_hi)) throw ConfigError(fmt::format("{}: need j_lo < j_hi", where));
  std::function<double(const SpectralField&)> ratio;
  if (type == "spaces.embedding") {
    const auto src = config::parse_space(config::need<json>(p, "source", where), where + ".source", hom, phi);
    const auto tgt = config::parse_space(config::need<json>(p, "target", where), where + ".target", hom, phi);
    ratio = [=](const SpectralField& f) { return check_embedding(f, src, tgt, part); };
  } else {
    const auto tgt = config::parse_space(config::need<json>(p, "target", where), where + ".target", hom, phi);
    const auto e0 = config::parse_space(config::need<json>(p, "end0", where), where + ".end0", hom, phi);
    const auto e1 = config::parse_space(config::need<json>(p, "end1", where), where + ".end1", hom, phi);
    const double theta = config::need<double>(p, "theta", where);
    ratio = [=](const SpectralField& f) { return check_gn(f, tgt, e0, e1, theta, part); };
  }
  config::guarded(where, [&] { return ratio(SpectralField::zeros(g)); });
  return {id, type, [=](const fs::path& out) {
            const std::size_t count = seeds.hi - seeds.lo;
            std::vector<double> r(count);
            parallel_for(count, [&](std::size_t i) {
              r[i] = ratio(make_initial_data(RandomBand{seeds.lo + i, j_lo, j_hi}, g));
            });
            Outcome o;
            CsvFile csv(out / (id + ".csv"), {"seed", "ratio"});
            for (std::size_t i = 0; i < count; ++i) csv.values({static_cast<double>(seeds.lo + i), r[i]});
            o.outputs.push_back(id + ".csv");
            o.summary["fields"] = count;
            o.summary["max_ratio"] = *std::max_element(r.begin(), r.end());
            return o;
          }};
}

inline DecaySpec parse_decay(const json& p, const std::string& where, const BernsteinFunction& phi) {
  const auto lemma = config::get<std::string>(p, "lemma", where, "S");
  DecaySpec s;
  s.phi = phi;
  s.alpha = config::need<double>(p, "alpha", where);
  s.p = config::get<double>(p, "p", where, 2.0);
  s.a = config::get<double>(p, "a", where, 0.0);
  s.fit_decades = config::get<double>(p, "fit_decades", where, 1.0);
  const double r = config::get<double>(p, "r", where, 2.0);
  if (lemma == "S" || lemma == "P")
    s.norm = LpTarget{r};
  else if (lemma == "sobolevS" || lemma == "sobolevP")
    s.norm = SobolevTarget{config::get<double>(p, "sigma", where, 0.0), r};
  else if (lemma == "besovS" || lemma == "besovP")
    s.norm = BesovTarget{config::get<double>(p, "b", where, 0.0), r, config::get_extended(p, "kappa", where, 2.0)};
  else
    throw ConfigError(fmt::format("{}.lemma: '{}' is not S|P|sobolevS|sobolevP|besovS|besovP", where, lemma));
  s.kind = lemma.back() == 'S' ? OperatorKind::S : OperatorKind::P;
  if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw ConfigError(fmt::format("{}.alpha: {} outside (0,1)", where, s.alpha));
  if (!(s.fit_decades > 0.0)) throw ConfigError(fmt::format("{}.fit_decades must be positive", where));
  return s;
}

inline Plan plan_decay(const std::string& id, const json& p, const std::string& where, const BernsteinFunction& phi) {
  const auto spec = parse_decay(p, where, phi);
  const int d = config::get<int>(p, "d", where, 1);
  const double t_lo = config::get<double>(p, "t_lo", where, 0.1), t_hi = config::get<double>(p, "t_hi", where, 1e3);
  const int per_decade = config::get<int>(p, "per_decade", where, 8);
  if (!(t_lo > 0.0 && t_lo < t_hi) || per_decade < 1) throw ConfigError(fmt::format("{}: bad time window", where));
  const double t_fit_lo = t_hi * std::pow(10.0, -spec.fit_decades);
  if (t_fit_lo < t_lo * (1.0 - 1e-12)) throw ConfigError(fmt::format("{}: fit window reaches below t_lo", where));
  config::guarded(where, [&] {
    if (d < 1 || d > 3) throw DomainError("d outside 1..3");
    detail::check_decay_constraints(spec, d);
    return 0;
  });
  return {id, "op.decay", [=](const fs::path& out) {
            const auto setup = decay_setup(spec.alpha, spec.phi.delta(), t_fit_lo, t_hi, d);
            const auto ts = log_times(t_lo, t_hi, per_decade);
            const auto fit = decay_fit(spec, setup.family, ts);
            Outcome o;
            CsvFile csv(out / (id + ".csv"), {"t", "norm", "slope_hat", "slope_theory"});
            for (std::size_t k = 0; k < fit.t.size(); ++k) csv.values({fit.t[k], fit.norm[k], fit.slope_hat, fit.slope_theory});
            o.outputs.push_back(id + ".csv");
            o.summary["slope_hat"] = fit.slope_hat;
            o.summary["slope_theory"] = fit.slope_theory;
            o.summary["rel_err"] = fit.rel_err;
            o.summary["fit_t_lo"] = t_fit_lo;
            o.summary["fit_t_hi"] = t_hi;
            o.summary["grid_n"] = setup.grid.n();
            o.summary["grid_L"] = setup.grid.length();
            return o;
          }};
}

inline Plan plan_bound_probe(const std::string& id, const json& p, const std::string& where, const TorusGrid& g,
                             const BernsteinFunction& phi, const Context& ctx) {
  const auto kind_s = config::get<std::string>(p, "kind", where, "S");
  if (kind_s != "S" && kind_s != "P") throw ConfigError(fmt::format("{}.kind: '{}' is not S|P", where, kind_s));
  const OperatorKind kind = kind_s == "S" ? OperatorKind::S : OperatorKind::P;
  PropagatorQuery q{config::need<double>(p, "alpha", where), phi, 1.0, config::get<double>(p, "sigma", where, 0.0),
                    config::get<double>(p, "a", where, 0.0)};
  const double pp = config::get<double>(p, "p", where, 2.0);
  const double t_lo = config::get<double>(p, "t_lo", where, 1e-2), t_hi = config::get<double>(p, "t_hi", where, 1e2);
  const int per_decade = config::get<int>(p, "per_decade", where, 4);
  const auto seed = seed_for(p, "family_seed", ctx, where);
  const int size = config::get<int>(p, "family_size", where, 50);
  if (!(t_lo > 0.0 && t_lo < t_hi) || per_decade < 1 || size < 1) throw ConfigError(fmt::format("{}: bad probe setup", where));
  config::guarded(where, [&] {
    validate(q, kind);
    if (!(pp > 1.0)) throw DomainError("p must exceed 1");
    return 0;
  });
  return {id, "op.bound_probe", [=](const fs::path& out) {
            const auto family = probe_family(g, seed, size);
            const auto ts = log_times(t_lo, t_hi, per_decade);
            const auto probe = multiplier_bound_probe(kind, q, pp, ts, family);
            Outcome o;
            CsvFile csv(out / (id + ".csv"), {"t", "sup_ratio"});
            for (std::size_t k = 0; k < probe.t.size(); ++k) csv.values({probe.t[k], probe.per_t[k]});
            o.outputs.push_back(id + ".csv");
            o.summary["sup_ratio"] = probe.sup_ratio;
            o.summary["variation"] = probe.variation;
            return o;
          }};
}

inline std::function<SpectralField(const TorusGrid&)> parse_data(const json& j, const std::string& where) {
  config::require_object(j, where);
  const auto kind = config::need<std::string>(j, "kind", where);
  if (kind == "gaussian") {
    config::check_keys(j, where, {"kind", "width"});
    const Gaussian k{config::get<double>(j, "width", where, 1.0)};
    return [k](const TorusGrid& g) { return make_initial_data(k, g); };
  }
  if (kind == "annular") {
    config::check_keys(j, where, {"kind", "j0", "eps"});
    const Annular k{config::need<double>(j, "j0", where), config::get<double>(j, "eps", where, 0.25)};
    return [k](const TorusGrid& g) { return make_initial_data(k, g); };
  }
  if (kind == "random_band") {
    config::check_keys(j, where, {"kind", "seed", "j_lo", "j_hi"});
    const RandomBand k{config::need<std::uint64_t>(j, "seed", where), config::need<double>(j, "j_lo", where),
                       config::need<double>(j, "j_hi", where)};
    return [k](const TorusGrid& g) { return make_initial_data(k, g); };
  }
  throw ConfigError(fmt::format("{}.kind: '{}' is not gaussian|annular|random_band", where, kind));
}

inline Plan plan_solve(const std::string& id, const json& p, const std::string& where, const TorusGrid& g,
                       const BernsteinFunction& phi) {
  SolveConfig c;
  c.alpha = config::need<double>(p, "alpha", where);
  c.phi = phi;
  c.triple.p = config::get<double>(p, "p", where, 2.0);
  c.triple.r = config::get<double>(p, "r", where, 4.0);
  c.p0 = config::get<double>(p, "p0", where, 3.0);
  c.tol_picard = config::get<double>(p, "tol", where, 1e-8);
  c.max_iter = config::get<int>(p, "max_iter", where, 60);
  c.nonlinearity.kappa = config::get<double>(p, "kappa", where, 2.0);
  c.nonlinearity.coeff = p.contains("coeff") ? config::as_complex(p.at("coeff"), where + ".coeff") : cplx{1.0, 0.0};
  const double horizon = config::get<double>(p, "T", where, 1.0);
  const int steps = config::get<int>(p, "steps", where, 16);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError(fmt::format("{}.alpha: {} outside (0,1)", where, c.alpha));
  c.mesh = {horizon, steps, config::get<double>(p, "grading", where, 2.0 / c.alpha)};
  c = config::guarded(where, [&] { return make_solve_config(c, g.d()); });
  const auto regime = config::get<std::string>(p, "regime", where, "none");
  if (regime == "local" || regime == "global") {
    const auto rep = regime == "local" ? local_conditions(c, g.d()) : global_conditions(c, g.d());
    if (!rep.all()) throw ConfigError(fmt::format("{}: {} existence conditions fail: {}", where, regime, rep.failed()));
  } else if (regime != "none") {
    throw ConfigError(fmt::format("{}.regime: '{}' is not none|local|global", where, regime));
  }
  const auto data = parse_data(config::need<json>(p, "data", where), where + ".data");
  const double amplitude = config::get<double>(p, "amplitude", where, 1.0);
  const bool residual = config::get<bool>(p, "residual", where, true);
  const auto snaps = config::get<std::string>(p, "snapshots", where, "final");
  if (snaps != "none" && snaps != "final" && snaps != "all")
    throw ConfigError(fmt::format("{}.snapshots: '{}' is not none|final|all", where, snaps));
  const auto w0 = config::guarded(where, [&] { return data(g).scaled(amplitude); });
  config::guarded(where, [&] {
    DyadicPartition(g).require_resolution(true);
    return 0;
  });
  return {id, "solve", [=](const fs::path& out) {
            const auto traj = picard_solve(w0, c);
            Outcome o;
            o.diverged = traj.diverged;
            {
              CsvFile csv(out / (id + "_convergence.csv"), {"iteration", "distance", "ratio"});
              for (std::size_t k = 0; k < traj.distances.size(); ++k)
                csv.values({static_cast<double>(k + 1), traj.distances[k],
                            k ? traj.ratios[k - 1] : std::numeric_limits<double>::quiet_NaN()});
            }
            o.outputs.push_back(id + "_convergence.csv");
            if (!traj.diverged) {
              const DyadicPartition part(g);
              const SpaceSpec besov{SpaceKind::besov, c.gamma0, c.p0, std::numeric_limits<double>::infinity(), true, c.phi};
              const double expo = c.alpha / c.triple.q;
              CsvFile csv(out / (id + "_norms.csv"), {"t", "l2", "besov_gamma0", "weighted_lr"});
              for (std::size_t m = 0; m < traj.t.size(); ++m) {
                const double t = traj.t[m];
                csv.values({t, lp_norm(traj.w[m], 2.0), besov_norm(traj.w[m], besov, part),
                            t > 0.0 ? std::pow(t, expo) * lp_norm(traj.w[m], c.triple.r) : 0.0});
              }
              o.outputs.push_back(id + "_norms.csv");
              if (snaps != "none") {
                fs::create_directories(out / id);
                for (std::size_t m = snaps == "all" ? 0 : traj.t.size() - 1; m < traj.t.size(); ++m) {
                  const auto base = fmt::format("{}/node_{:04d}", id, m);
                  write_snapshot(out / base, traj.w[m], traj.t[m], fmt::format("{}:{}", id, m));
                  o.outputs.push_back(base + ".bin");
                  o.outputs.push_back(base + ".json");
                }
              }
              o.summary["xalpha_norm"] = xalpha_norm(traj, c);
              if (residual) o.summary["mild_residual"] = mild_residual(traj, c);
            }
            o.summary["converged"] = traj.converged;
            o.summary["diverged"] = traj.diverged;
            o.summary["iterations"] = traj.iterations;
            o.summary["q"] = c.triple.q;
            o.summary["gamma0"] = c.gamma0;
            return o;
          }};
}

} // namespace detail

/// Turns a run config into validated plans. Throws ConfigError on any schema or parameter problem.
inline std::vector<Plan> plan_suite(const json& root) {
  using namespace config;
  check_keys(root, "config",
             {"seed", "deterministic", "grid", "phi", "mlf", "spaces", "operator", "solver", "output", "experiments"});
  detail::Context ctx{root, std::nullopt};
  if (root.contains("seed")) ctx.seed = get<std::uint64_t>(root, "seed", "config", 0);
  get<bool>(root, "deterministic", "config", true);
  if (root.contains("output")) {
    check_keys(root.at("output"), "output", {"dir"});
    get<std::string>(root.at("output"), "dir", "output", "");
  }
  if (root.contains("grid")) parse_grid(root.at("grid"), "grid");
  if (root.contains("phi")) parse_phi(root.at("phi"), "phi");

  const auto& keys = detail::experiment_keys();
  for (const char* sec : {"mlf", "spaces", "operator", "solver"}) {
    if (!root.contains(sec)) continue;
    Keys allowed;
    for (const auto& [type, k] : keys)
      if (detail::section_of(type) == sec) allowed.insert(allowed.end(), k.begin(), k.end());
    check_keys(root.at(sec), sec, allowed);
  }

  std::vector<Plan> plans;
  if (!root.contains("experiments")) return plans;
  const auto& list = root.at("experiments");
  if (!list.is_array()) throw ConfigError("experiments: expected a list");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& e = list[i];
    const std::string at = fmt::format("experiments[{}]", i);
    require_object(e, at);
    const auto type = need<std::string>(e, "type", at);
    const auto it = keys.find(type);
    if (it == keys.end()) throw ConfigError(fmt::format("{}.type: unknown experiment type '{}'", at, type));
    const auto id = get<std::string>(e, "id", at, fmt::format("{}_{}", type, i));
    if (id.empty() || id.find_first_of("/\\") != std::string::npos || id.starts_with("."))
      throw ConfigError(fmt::format("{}.id: '{}' is not a plain file stem", at, id));
    if (!ids.insert(id).second) throw ConfigError(fmt::format("{}.id: duplicate id '{}'", at, id));
    const std::string where = fmt::format("experiments[{}] ({})", i, id);

    // section defaults, then experiment keys
    json params = json::object();
    const auto sec = detail::section_of(type);
    if (!sec.empty() && root.contains(sec))
      for (const auto& [k, v] : root.at(sec).items())
        if (std::find(it->second.begin(), it->second.end(), k) != it->second.end()) params[k] = v;
    Keys allowed = it->second;
    for (const char* extra : {"id", "type", "grid", "phi"}) allowed.push_back(extra);
    check_keys(e, where, allowed);
    for (const auto& [k, v] : e.items())
      if (k != "id" && k != "type" && k != "grid" && k != "phi") params[k] = v;

    const auto phi = detail::phi_for(e, ctx, where);
    if (type == "mlf.eval")
      plans.push_back(detail::plan_mlf_eval(id, params, where));
    else if (type == "mlf.laplace")
      plans.push_back(detail::plan_mlf_laplace(id, params, where));
    else if (type == "mlf.caputo")
      plans.push_back(detail::plan_mlf_caputo(id, params, where));
    else if (type == "bernstein.check")
      plans.push_back(detail::plan_bernstein(id, params, where, phi));
    else if (type.starts_with("spaces."))
      plans.push_back(detail::plan_spaces(id, type, params, where, detail::grid_for(e, ctx, where), phi));
    else if (type == "op.decay")
      plans.push_back(detail::plan_decay(id, params, where, phi));
    else if (type == "op.bound_probe")
      plans.push_back(detail::plan_bound_probe(id, params, where, detail::grid_for(e, ctx, where), phi, ctx));
    else
      plans.push_back(detail::plan_solve(id, params, where, detail::grid_for(e, ctx, where), phi));
  }
  return plans;
}

/// Reads a run config, or the config embedded in a manifest.
inline json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: malformed JSON: {}", path.string(), e.what()));
  }
  if (j.is_object() && j.contains("tool") && j.contains("config")) return j.at("config");
  return j;
}

struct RunOptions {
  /// Highest-precedence output directory (command line).
  std::optional<fs::path> out;
};

/// Command line, then FRACLAB_OUT, then output.dir, then ./fraclab_out.
inline fs::path resolve_output_dir(const json& root, const RunOptions& opt) {
  if (opt.out) return *opt.out;
  if (const char* env = std::getenv("FRACLAB_OUT"); env && *env) return env;
  if (root.contains("output") && root.at("output").contains("dir")) return root.at("output").at("dir").get<std::string>();
  return "fraclab_out";
}

struct RunResult {
  fs::path out_dir;
  fs::path manifest;
  bool diverged = false;
  json manifest_json;
};

/// Validates everything, runs the plans in order and writes manifest.json last.
inline RunResult run_suite(const json& root, const RunOptions& opt = {}) {
  const auto plans = plan_suite(root);
  RunResult res;
  res.out_dir = resolve_output_dir(root, opt);
  std::error_code ec;
  fs::create_directories(res.out_dir, ec);
  if (ec) throw Error(fmt::format("cannot create output directory {}: {}", res.out_dir.string(), ec.message()));

  json m;
  m["tool"] = tool_name;
  m["version"] = tool_version;
  m["started"] = detail::utc_now();
  m["threads"] = thread_count();
  m["seed"] = root.contains("seed") ? root.at("seed") : json(nullptr);
  m["deterministic"] = root.value("deterministic", true);
  json exps = json::array();
  for (const auto& p : plans) {
    const auto o = p.run(res.out_dir);
    res.diverged = res.diverged || o.diverged;
    exps.push_back({{"id", p.id},
                    {"type", p.type},
                    {"status", o.diverged ? "diverged" : "ok"},
                    {"outputs", o.outputs},
                    {"summary", o.summary}});
  }
  m["experiments"] = std::move(exps);
  m["diverged"] = res.diverged;
  m["finished"] = detail::utc_now();
  m["config"] = root;
  res.manifest = res.out_dir / "manifest.json";
  std::ofstream out(res.manifest);
  out << m.dump(2) << '\n';
  if (!out) throw Error(fmt::format("cannot write {}", res.manifest.string()));
  res.manifest_json = std::move(m);
  return res;
}

inline RunResult run_suite(const fs::path& config_path, const RunOptions& opt = {}) {
  return run_suite(load_config(config_path), opt);
}

namespace detail {

inline std::vector<std::vector<double>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("missing result file {}", path.string()));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell.empty() ? std::nan("") : std::strtod(cell.c_str(), nullptr));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_loglog(const fs::path& path, const std::string& ycol, const std::vector<std::vector<double>>& rows,
                         std::size_t xi, std::size_t yi) {
  CsvFile csv(path, {"log10_t", "log10_" + ycol});
  for (const auto& r : rows)
    if (r.size() > std::max(xi, yi) && r[xi] > 0.0 && r[yi] > 0.0) csv.values({std::log10(r[xi]), std::log10(r[yi])});
}

} // namespace detail

/// Plot-ready files next to the results: <id>_loglog.csv (log10 t, log10 value) for decay,
/// probe and solve runs, and <id>_fit.json with the fitted line for decay runs.
inline std::vector<fs::path> emit_plotdata(const fs::path& results_dir) {
  const auto manifest_path = results_dir / "manifest.json";
  if (!fs::exists(manifest_path))
    throw Error(fmt::format("{}: no results; expected manifest.json and the CSV files it lists "
                            "(<id>.csv for op.decay/op.bound_probe, <id>_norms.csv for solve)",
                            results_dir.string()));
  std::ifstream in(manifest_path);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(fmt::format("{}: unreadable manifest: {}", manifest_path.string(), e.what()));
  }
  std::vector<fs::path> written;
  for (const auto& e : m.at("experiments")) {
    const auto id = e.at("id").get<std::string>();
    const auto type = e.at("type").get<std::string>();
    if (type == "op.decay") {
      const auto rows = detail::read_csv(results_dir / (id + ".csv"));
      const auto ll = results_dir / (id + "_loglog.csv");
      detail::write_loglog(ll, "norm", rows, 0, 1);
      const auto& s = e.at("summary");
      const double lo = s.at("fit_t_lo").get<double>() * (1.0 - 1e-12), hi = s.at("fit_t_hi").get<double>();
      const double slope = s.at("slope_hat").get<double>();
      double acc = 0.0;
      int count = 0;
      for (const auto& r : rows)
        if (r[0] >= lo && r[0] <= hi && r[1] > 0.0) {
          acc += std::log10(r[1]) - slope * std::log10(r[0]);
          ++count;
        }
      json fit{{"id", id},
               {"slope_hat", slope},
               {"slope_theory", s.at("slope_theory")},
               {"intercept_log10", count ? acc / count : std::nan("")},
               {"fit_t_lo", s.at("fit_t_lo")},
               {"fit_t_hi", hi}};
      const auto fj = results_dir / (id + "_fit.json");
      std::ofstream(fj) << fit.dump(2) << '\n';
      written.push_back(ll);
      written.push_back(fj);
    } else if (type == "op.bound_probe") {
      const auto ll = results_dir / (id + "_loglog.csv");
      detail::write_loglog(ll, "sup_ratio", detail::read_csv(results_dir / (id + ".csv")), 0, 1);
      written.push_back(ll);
    } else if (type == "solve" && e.at("status") == "ok") {
      const auto ll = results_dir / (id + "_loglog.csv");
      detail::write_loglog(ll, "l2", detail::read_csv(results_dir / (id + "_norms.csv")), 0, 1);
      written.push_back(ll);
    }
  }
  return written;
}

} // namespace fraclab
