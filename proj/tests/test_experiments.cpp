#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "fraclab/experiments.hpp"

using namespace fraclab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fraclab_experiments_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + FRACLAB_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json small_suite() {
  return json::parse(R"({
    "seed": 7,
    "grid": {"d": 1, "n": 512, "L": 50.26548245743669},
    "phi": {"family": "power", "gamma": 1.0},
    "experiments": [
      {"id": "ml", "type": "mlf.eval", "points": [[0.5, 1.0, 0.0, -3.0], [0.8, 0.8, 1.0, 2.0]]},
      {"id": "lap", "type": "mlf.laplace", "alphas": [0.5], "betas": [1.0, "alpha"], "a": [1.0], "s": [3.0]},
      {"id": "bern", "type": "bernstein.check", "phi": {"family": "power_sum", "gamma1": 1.0, "gamma2": 0.5}},
      {"id": "probe", "type": "op.bound_probe", "alpha": 0.6, "p": 3.0, "t_lo": 0.1, "t_hi": 10.0,
       "per_decade": 1, "family_size": 4},
      {"id": "sol", "type": "solve", "alpha": 0.6, "T": 0.5, "steps": 4, "data": {"kind": "gaussian", "width": 1.0},
       "amplitude": 0.01, "snapshots": "final", "regime": "local"}
    ]
  })");
}

} // namespace

TEST(Experiments, PlanRejectsSchemaErrors) {
  EXPECT_THROW(plan_suite(json::parse(R"({"bogus": 1})")), ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"experiments": [{"type": "nope"}]})")), ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"experiments": [{"type": "mlf.eval", "points": [[0.5, 1, 0, 0]], "extra": 1}]})")),
               ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"experiments": [{"type": "mlf.eval", "points": [[0.5, 1, 0, 0]], "tol": "x"}]})")),
               ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"experiments": [{"id": "a/b", "type": "mlf.eval", "points": [[0.5, 1, 0, 0]]}]})")),
               ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"experiments": [
      {"id": "x", "type": "mlf.eval", "points": [[0.5, 1, 0, 0]]},
      {"id": "x", "type": "mlf.eval", "points": [[0.5, 1, 0, 0]]}]})")),
               ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"experiments": [{"type": "solve", "alpha": 0.6, "data": {"kind": "gaussian"}}]})")),
               ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"grid": {"d": 1, "n": 512, "L": 50},
      "experiments": [{"type": "solve", "alpha": 0.6, "p0": 9, "data": {"kind": "gaussian"}}]})")),
               ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"grid": {"d": 1, "n": 512, "L": 50},
      "experiments": [{"type": "solve", "alpha": 0.6, "regime": "global", "data": {"kind": "gaussian"}}]})")),
               ConfigError);
  EXPECT_THROW(plan_suite(json::parse(R"({"phi": {"family": "weird"}})")), ConfigError);
  EXPECT_TRUE(plan_suite(json::parse(R"({"experiments": []})")).empty());
}

TEST(Experiments, SectionDefaultsApply) {
  const auto plans = plan_suite(json::parse(R"({"mlf": {"tol": 1e-9},
      "experiments": [{"type": "mlf.eval", "points": [[0.5, 1, 0, 0]]}]})"));
  ASSERT_EQ(plans.size(), 1u);
  EXPECT_EQ(plans[0].id, "mlf.eval_0");
  EXPECT_THROW(plan_suite(json::parse(R"({"mlf": {"kappa": 3}})")), ConfigError);
}

TEST(Experiments, OutputDirectoryPrecedence) {
  const auto root = json::parse(R"({"output": {"dir": "from_config"}})");
  ::unsetenv("FRACLAB_OUT");
  EXPECT_EQ(resolve_output_dir(json::object(), {}), fs::path("fraclab_out"));
  EXPECT_EQ(resolve_output_dir(root, {}), fs::path("from_config"));
  ::setenv("FRACLAB_OUT", "from_env", 1);
  EXPECT_EQ(resolve_output_dir(root, {}), fs::path("from_env"));
  EXPECT_EQ(resolve_output_dir(root, {fs::path("from_cli")}), fs::path("from_cli"));
  ::unsetenv("FRACLAB_OUT");
}

TEST(Experiments, SuiteRunsAndRerunsIdentically) {
  const auto a = scratch("first"), b = scratch("second");
  const auto first = run_suite(small_suite(), {a});
  EXPECT_FALSE(first.diverged);
  const auto& m = first.manifest_json;
  EXPECT_EQ(m.at("tool"), "fraclab");
  ASSERT_EQ(m.at("experiments").size(), 5u);
  for (const auto& e : m.at("experiments")) {
    EXPECT_EQ(e.at("status"), "ok");
    for (const auto& f : e.at("outputs")) EXPECT_TRUE(fs::exists(a / f.get<std::string>())) << f;
  }
  EXPECT_TRUE(m.at("experiments")[4].at("summary").at("converged").get<bool>());

  set_threads(2);
  const auto second = run_suite(load_config(first.manifest), {b});
  set_threads(0);
  int compared = 0;
  for (const auto& e : second.manifest_json.at("experiments"))
    for (const auto& f : e.at("outputs")) {
      const auto name = f.get<std::string>();
      EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
      ++compared;
    }
  EXPECT_GE(compared, 7);

  const auto plots = emit_plotdata(a);
  ASSERT_FALSE(plots.empty());
  for (const auto& p : plots) EXPECT_TRUE(fs::exists(p));
}

TEST(Experiments, LaplaceCsvColumns) {
  const auto dir = scratch("laplace");
  run_suite(json::parse(R"({"experiments": [{"id": "l", "type": "mlf.laplace", "alphas": [0.7],
      "betas": ["alpha"], "a": [[0, 1]], "s": [4]}]})"),
            {dir});
  const auto text = slurp(dir / "l.csv");
  const auto header = text.substr(0, text.find('\n'));
  EXPECT_NE(header.find("residual"), std::string::npos) << header;
}

TEST(Experiments, ReportWithoutResultsFails) {
  const auto dir = scratch("empty_report");
  EXPECT_THROW(emit_plotdata(dir), Error);
  EXPECT_EQ(run_cli("report --results \"" + dir.string() + "\""), 3);
}

TEST(Experiments, CliExitCodes) {
  const auto dir = scratch("cli");
  const auto malformed = write_file(dir / "bad.json", "{ not json");
  EXPECT_EQ(run_cli("run --config \"" + malformed.string() + "\" --out \"" + (dir / "o1").string() + "\""), 2);
  const auto unknown = write_file(dir / "unknown.json", R"({"experiments": [], "surprise": true})");
  EXPECT_EQ(run_cli("run --config \"" + unknown.string() + "\" --out \"" + (dir / "o2").string() + "\""), 2);
  const auto empty = write_file(dir / "empty.json", R"({"experiments": []})");
  EXPECT_EQ(run_cli("--out \"" + (dir / "o3").string() + "\" run --config \"" + empty.string() + "\""), 0);
  EXPECT_TRUE(fs::exists(dir / "o3" / "manifest.json"));
  EXPECT_EQ(run_cli("nonsense"), 2);
  EXPECT_EQ(run_cli("mlf eval --alpha 1 --beta 1 --re 1 --im 0"), 0);
  EXPECT_EQ(run_cli("mlf eval --alpha 0 --beta 1 --re 1 --im 0"), 2);
}

TEST(Experiments, CliDivergenceExitsZero) {
  const auto dir = scratch("diverge");
  const auto cfg = write_file(dir / "div.json", R"({"grid": {"d": 1, "n": 512, "L": 50.26548245743669},
      "experiments": [{"id": "blow", "type": "solve", "alpha": 0.6, "T": 1.0, "steps": 4, "max_iter": 3,
                       "data": {"kind": "gaussian"}, "amplitude": 30.0, "residual": false}]})");
  EXPECT_EQ(run_cli("--out \"" + (dir / "o").string() + "\" solve --config \"" + cfg.string() + "\""), 0);
  const auto m = json::parse(slurp(dir / "o" / "manifest.json"));
  EXPECT_TRUE(m.at("diverged").get<bool>());
  EXPECT_EQ(m.at("experiments")[0].at("status"), "diverged");
}
