#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cammel/cli.hpp"

using namespace cammel;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "cammel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("cammel_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path tiny_config(const fs::path& dir) {
  const json cfg = {{"scenario", {{"K", 5}, {"n_causal", 1}, {"window_size", 8}, {"h_m2", 0.3}}},
                    {"panel", {{"n", 60}, {"block_sizes", {40, 40, 70}}, {"analysis_blocks", 2}}},
                    {"svi", {{"iterations", 200}, {"step_size", 0.05}}}};
  const fs::path p = dir / "cfg.json";
  io::write_json(p, cfg);
  return p;
}

}  // namespace

TEST_CASE("version and usage errors", "[cli]") {
  const auto v = run({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(kVersion) != std::string::npos);

  const auto bad = run({"simulate", "--bogus"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("UsageError") != std::string::npos);

  CHECK(run({}).code == 1);

  const auto noseed = run({"benchmark", "--out", "x.tsv"});
  CHECK(noseed.code == 1);
  CHECK(noseed.err.find("--seed") != std::string::npos);

  CHECK(run({"fit", "--method", "lasso", "--out", "x.tsv"}).code == 1);
  CHECK(run({"report", "--in", "/nonexistent/report.tsv"}).code == 2);
  CHECK(run({"--threads", "0", "report", "--in", "x"}).code == 1);
}

TEST_CASE("simulate writes the scenario files", "[cli]") {
  const auto dir = scratch("simulate");
  const auto cfg = tiny_config(dir);
  const auto r = run({"simulate", "--config", cfg.string(), "--seed", "5", "--out", (dir / "sim").string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"gwas.tsv", "eqtl_0.tsv", "eqtl_4.tsv", "truth.json", "panel.tsv", "null_panel.tsv",
                        "expression.tsv", "phenotype.tsv"}) {
    CHECK(fs::exists(dir / "sim" / f));
  }
  const json truth = io::read_json(dir / "sim" / "truth.json");
  CHECK(truth.at("seed") == 5);
  CHECK(truth.at("config").at("K") == 5);
  CHECK(load_summary(dir / "sim" / "gwas.tsv").trait_id == "gwas");
}

TEST_CASE("fit runs every method on simulated files", "[cli]") {
  const auto dir = scratch("fit");
  const auto cfg = tiny_config(dir);
  REQUIRE(run({"simulate", "--config", cfg.string(), "--seed", "6", "--out", (dir / "sim").string()}).code == 0);
  for (const char* m : {"naive", "fact", "proj", "stwas", "ivw", "egger", "otwas"}) {
    const fs::path out = dir / (std::string(m) + ".tsv");
    const auto r = run({"fit", "--method", m, "--config", cfg.string(), "--seed", "1", "--dir",
                        (dir / "sim").string(), "--out", out.string()});
    INFO(m << ": " << r.err);
    REQUIRE(r.code == 0);
    const io::Table t = io::read_table(out);
    CHECK(t.rows.size() == 5);
    CHECK(t.header.front() == "gene_id");
  }
  const auto fact = io::read_table(dir / "fact.tsv");
  CHECK(fact.header == std::vector<std::string>{"gene_id", "beta_mean", "beta_pip", "sign"});

  const auto missing = run({"fit", "--method", "proj", "--out", (dir / "x.tsv").string(), "--panel",
                            (dir / "sim" / "panel.tsv").string(), "--gwas", (dir / "sim" / "gwas.tsv").string(),
                            "--eqtl", (dir / "sim" / "eqtl_0.tsv").string()});
  CHECK(missing.code == 1);
}

TEST_CASE("config values are overridden by flags", "[cli]") {
  const json j = {{"seed", 3}, {"replicates", 4}, {"scenario_kind", "polygenic"}, {"methods", {"stwas"}}};
  const auto dir = scratch("resolve");
  io::write_json(dir / "c.json", j);
  const auto rc = cli_detail::resolve(Subcommand::benchmark, (dir / "c.json").string(), "", 9, std::nullopt,
                                      std::nullopt, {});
  CHECK(*rc.seed == 9);
  CHECK(rc.replicates == 4);
  CHECK(rc.scenario == ScenarioKind::polygenic);
  CHECK(rc.scenario_config.K == 150);
  CHECK(rc.methods == std::vector<Method>{Method::stwas});
  const auto rc2 = cli_detail::resolve(Subcommand::benchmark, (dir / "c.json").string(), "confounded",
                                       std::nullopt, 2, std::nullopt, {"ivw", "egger"});
  CHECK(*rc2.seed == 3);
  CHECK(rc2.replicates == 2);
  CHECK(rc2.scenario == ScenarioKind::confounded);
  CHECK(rc2.methods.size() == 2);
}

TEST_CASE("benchmark and report through the binary are byte-identical across runs", "[cli][property]") {
  const auto dir = scratch("bench");
  const auto cfg = tiny_config(dir);
  const std::string exe = CAMMEL_CLI_PATH;
  auto bench = [&](const std::string& name) {
    const std::string cmd = exe + " --threads 2 benchmark --config " + cfg.string() +
                            " --seed 11 --replicates 2 --out " + (dir / name).string() + " > /dev/null";
    return std::system(cmd.c_str());
  };
  REQUIRE(bench("a.tsv") == 0);
  REQUIRE(bench("b.tsv") == 0);
  CHECK(slurp(dir / "a.tsv") == slurp(dir / "b.tsv"));
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  const auto r = run({"report", "--in", (dir / "a.tsv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("cammel_proj") != std::string::npos);
  CHECK(r.out.find("+-") != std::string::npos);
}
