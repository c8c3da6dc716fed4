// Command-line front end. Exit codes: 0 success (divergence is flagged in the manifest),
// 2 config or usage error, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fraclab/experiments.hpp"

namespace {

using fraclab::json;

constexpr int exit_schema = 2;
constexpr int exit_numeric = 3;

json config_with(const json& base, const std::string& type_prefix, const std::optional<std::string>& lemma) {
  json cfg = base;
  json kept = json::array();
  if (cfg.contains("experiments") && cfg.at("experiments").is_array())
    for (auto e : cfg.at("experiments")) {
      if (!e.is_object() || !e.contains("type") || !e.at("type").is_string()) {
        kept.push_back(e);
        continue;
      }
      if (!e.at("type").get<std::string>().starts_with(type_prefix)) continue;
      if (lemma) e["lemma"] = *lemma;
      kept.push_back(std::move(e));
    }
  cfg["experiments"] = kept;
  return cfg;
}

void print_result(const fraclab::RunResult& r) {
  for (const auto& e : r.manifest_json.at("experiments"))
    fmt::print("{} [{}] {}: {}\n", e.at("id").get<std::string>(), e.at("type").get<std::string>(),
               e.at("status").get<std::string>(), e.at("summary").dump());
  fmt::print("manifest: {}\n", r.manifest.string());
  if (r.diverged) fmt::print("note: at least one solve diverged (flagged in the manifest)\n");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"fraclab: spectral lab for time-fractional Schroedinger-type equations"};
  app.require_subcommand(1);
  std::optional<std::string> out;
  int threads = 0;
  app.add_option("--out", out, "Output directory (overrides FRACLAB_OUT and output.dir)");
  app.add_option("--threads", threads, "Worker threads (overrides FRACLAB_THREADS)")->check(CLI::NonNegativeNumber);

  std::string config_path;

  auto* run = app.add_subcommand("run", "Run every experiment of a config or manifest");
  run->add_option("--config", config_path, "Run config or manifest.json")->required();

  auto* mlf = app.add_subcommand("mlf", "Mittag-Leffler evaluation and checks");
  mlf->require_subcommand(1);
  auto* mlf_eval = mlf->add_subcommand("eval", "Evaluate E_{alpha,beta}(z)");
  double alpha = 0.5, beta = 1.0, re = 0.0, im = 0.0, tol = 1e-10;
  mlf_eval->add_option("--alpha", alpha)->required();
  mlf_eval->add_option("--beta", beta)->required();
  mlf_eval->add_option("--re", re)->required();
  mlf_eval->add_option("--im", im)->required();
  mlf_eval->add_option("--tol", tol);
  auto* mlf_laplace = mlf->add_subcommand("laplace-check", "Laplace-identity sweep to CSV");
  std::optional<std::string> mlf_config;
  mlf_laplace->add_option("--config", mlf_config, "Config with mlf.laplace experiments (default grid otherwise)");

  auto* bern = app.add_subcommand("bernstein", "Bernstein function checks");
  bern->require_subcommand(1);
  auto* bern_check = bern->add_subcommand("check", "Derivative bounds and scaling index");
  std::string family = "power";
  double gamma = 1.0, gamma2 = 0.5, mass = 1.0, bbeta = 1.0, drift = 0.0;
  bern_check->add_option("--family", family)->check(CLI::IsMember({"power", "power_sum", "relativistic", "log_damped"}));
  bern_check->add_option("--gamma", gamma);
  bern_check->add_option("--gamma2", gamma2);
  bern_check->add_option("--m", mass);
  bern_check->add_option("--beta", bbeta);
  bern_check->add_option("--drift", drift);

  auto* spaces = app.add_subcommand("spaces", "Embedding and Gagliardo-Nirenberg sweeps");
  spaces->require_subcommand(1);
  auto* spaces_verify = spaces->add_subcommand("verify", "Run the spaces.* experiments of a config");
  spaces_verify->add_option("--config", config_path)->required();

  auto* op = app.add_subcommand("op", "Propagator decay fits and multiplier probes");
  op->require_subcommand(1);
  auto* op_decay = op->add_subcommand("decay", "Run the op.decay experiments of a config");
  std::optional<std::string> lemma;
  op_decay->add_option("--lemma", lemma, "Override the lemma of every decay experiment")
      ->check(CLI::IsMember({"S", "P", "sobolevS", "sobolevP", "besovS", "besovP"}));
  op_decay->add_option("--config", config_path)->required();
  auto* op_probe = op->add_subcommand("bound-probe", "Run the op.bound_probe experiments of a config");
  op_probe->add_option("--config", config_path)->required();

  auto* solve = app.add_subcommand("solve", "Run the solve experiments of a config");
  solve->add_option("--config", config_path)->required();

  auto* report = app.add_subcommand("report", "Emit plot-ready CSV/JSON from a results directory");
  std::string results;
  report->add_option("--results", results)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_schema;
  }

  if (threads > 0) fraclab::set_threads(threads);
  fraclab::RunOptions opt;
  if (out) opt.out = *out;

  try {
    if (*mlf_eval) {
      if (!(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0)) {
        fmt::print(stderr, "error: need 0 < alpha <= 1 and beta > 0\n");
        return exit_schema;
      }
      const auto v = fraclab::ml_eval(fraclab::MLQuery{alpha, beta, {re, im}, tol});
      fmt::print("{:.17g} {:.17g}\n", v.real(), v.imag());
      return 0;
    }
    if (*report) {
      for (const auto& p : fraclab::emit_plotdata(results)) fmt::print("{}\n", p.string());
      return 0;
    }

    json cfg;
    if (*run) {
      cfg = fraclab::load_config(config_path);
    } else if (*mlf_laplace) {
      cfg = mlf_config ? config_with(fraclab::load_config(*mlf_config), "mlf.laplace", std::nullopt)
                       : json{{"experiments", json::array({{{"id", "laplace_check"}, {"type", "mlf.laplace"}}})}};
    } else if (*bern_check) {
      json phi{{"family", family}};
      if (family == "power") phi["gamma"] = gamma;
      if (family == "power_sum") phi.update({{"gamma1", gamma}, {"gamma2", gamma2}});
      if (family == "relativistic") phi.update({{"gamma", gamma}, {"m", mass}});
      if (family == "log_damped") phi["beta"] = bbeta;
      if (drift > 0.0) phi["drift"] = drift;
      cfg = json{{"phi", phi}, {"experiments", json::array({{{"id", "bernstein_check"}, {"type", "bernstein.check"}}})}};
    } else if (*spaces_verify) {
      cfg = config_with(fraclab::load_config(config_path), "spaces.", std::nullopt);
    } else if (*op_decay) {
      cfg = config_with(fraclab::load_config(config_path), "op.decay", lemma);
    } else if (*op_probe) {
      cfg = config_with(fraclab::load_config(config_path), "op.bound_probe", std::nullopt);
    } else if (*solve) {
      cfg = config_with(fraclab::load_config(config_path), "solve", std::nullopt);
    }
    print_result(fraclab::run_suite(cfg, opt));
    return 0;
  } catch (const fraclab::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return exit_schema;
  } catch (const std::exception& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return exit_numeric;
  }
}
