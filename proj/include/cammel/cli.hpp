#pragma once

// Command-line front end: simulate, fit, benchmark and report.
// Exit status 0 on success, 1 usage error, 2 data error, 3 numerical failure.

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cammel/bench.hpp"
#include "cammel/io.hpp"

namespace cammel {

inline constexpr const char* kVersion = "0.1.0";

enum class Subcommand { simulate, fit, benchmark, report };

struct RunConfig {
  Subcommand subcommand = Subcommand::simulate;
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  ScenarioKind scenario = ScenarioKind::custom;
  ScenarioConfig scenario_config;
  PanelSpec panel;
  MediationOptions mediation;
  std::vector<Method> methods;
  int replicates = 20;
  int threads = 1;
};

namespace cli_detail {

inline Error usage(const std::string& what) { return Error("cli", "UsageError", what, ErrorKind::usage); }

inline ScenarioConfig scenario_defaults(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::polygenic: return polygenic_defaults();
    case ScenarioKind::confounded: return confounded_defaults();
    case ScenarioKind::custom: break;
  }
  return ScenarioConfig{};
}

/// Config file first, then flags that were given on the command line.
inline RunConfig resolve(Subcommand sub, const std::string& config_path, const std::string& scenario_flag,
                         std::optional<std::uint64_t> seed_flag, std::optional<int> replicates_flag,
                         std::optional<int> threads_flag, const std::vector<std::string>& methods_flag) {
  RunConfig rc;
  rc.subcommand = sub;
  rc.config_path = config_path;
  json j = json::object();
  if (!config_path.empty()) j = io::read_json(config_path);
  if (!j.is_object()) throw usage("config must be a JSON object");

  std::string scenario = j.value("scenario_kind", std::string("custom"));
  if (!scenario_flag.empty()) scenario = scenario_flag;
  rc.scenario = parse_scenario(scenario);
  rc.scenario_config = scenario_defaults(rc.scenario);
  if (j.contains("scenario")) rc.scenario_config = scenario_from_json(j.at("scenario"), rc.scenario_config);
  if (j.contains("panel")) rc.panel = panel_from_json(j.at("panel"), rc.panel);
  rc.mediation = mediation_from_json(j, rc.mediation);

  if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
  if (seed_flag) rc.seed = seed_flag;
  rc.replicates = replicates_flag.value_or(j.value("replicates", rc.replicates));
  rc.threads = threads_flag.value_or(j.value("threads", rc.threads));
  std::vector<std::string> names = methods_flag;
  if (names.empty() && j.contains("methods")) names = j.at("methods").get<std::vector<std::string>>();
  for (const auto& m : names) rc.methods.push_back(parse_method(m));
  if (rc.methods.empty()) rc.methods = all_methods();
  if (rc.seed) {
    rc.scenario_config.seed = *rc.seed;
    rc.mediation.svi.seed = *rc.seed;
  }
  return rc;
}

inline std::vector<fs::path> eqtl_files(const fs::path& dir) {
  std::vector<std::pair<long, fs::path>> found;
  const std::regex pattern("eqtl_([0-9]+)\\.tsv");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stol(m[1].str()), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

inline int run_simulate(const RunConfig& rc, const std::string& panel_path, std::ostream& out) {
  if (!rc.seed) throw usage("simulate requires --seed (flag or config)");
  if (rc.out.empty()) throw usage("simulate requires --out");
  const fs::path dir(rc.out);
  fs::create_directories(dir);

  GenotypePanel analysis;
  std::optional<GenotypePanel> null_block;
  if (!panel_path.empty()) {
    analysis = load_panel(panel_path);
  } else {
    BenchPanels panels = make_panels(rc.panel, *rc.seed);
    analysis = std::move(panels.analysis);
    null_block = std::move(panels.null_block);
  }
  Rng rng = make_stream(*rc.seed, 1);
  const ScenarioData data = simulate_for(rc.scenario, analysis, rc.scenario_config, rng);

  write_summary(dir / "gwas.tsv", data.combined.gwas);
  for (Index k = 0; k < data.combined.num_genes(); ++k) {
    write_summary(dir / ("eqtl_" + std::to_string(k) + ".tsv"), data.combined.eqtl[static_cast<std::size_t>(k)]);
  }
  write_observed(dir / "expression.tsv", dir / "phenotype.tsv", data);
  json truth = truth_json(data);
  truth["scenario_kind"] = to_string(rc.scenario);
  truth["seed"] = *rc.seed;
  if (null_block) {
    truth["panel"] = to_json(rc.panel);
    write_panel(dir / "panel.tsv", analysis);
    write_panel(dir / "null_panel.tsv", *null_block);
  }
  io::write_json(dir / "truth.json", truth);
  out << "wrote " << data.combined.num_genes() << " eQTL traits and GWAS to " << dir.string() << "\n";
  return 0;
}

struct FitPaths {
  std::string dir, panel, null_panel, gwas, expression, phenotype, posterior, factors, covariates;
  std::vector<std::string> eqtl;
};

inline int run_fit(const RunConfig& rc, const std::string& method_name, FitPaths paths, std::ostream& out) {
  if (rc.out.empty()) throw usage("fit requires --out");
  const Method method = parse_method(method_name);
  auto pick = [&](std::string& target, const char* file) {
    if (target.empty() && !paths.dir.empty()) target = (fs::path(paths.dir) / file).string();
  };
  pick(paths.panel, "panel.tsv");
  pick(paths.null_panel, "null_panel.tsv");
  pick(paths.gwas, "gwas.tsv");
  pick(paths.expression, "expression.tsv");
  pick(paths.phenotype, "phenotype.tsv");
  if (paths.eqtl.empty() && !paths.dir.empty()) {
    for (const auto& p : eqtl_files(paths.dir)) paths.eqtl.push_back(p.string());
  }

  if (method == Method::otwas) {
    if (paths.expression.empty() || paths.phenotype.empty()) {
      throw usage("otwas requires --expression and --phenotype (or --dir)");
    }
    const ObservedData obs = load_observed(paths.expression, paths.phenotype);
    std::vector<BaselineScore> scores;
    for (Index k = 0; k < obs.expression.cols(); ++k) {
      scores.push_back(otwas(obs.expression.col(k), obs.phenotype, obs.gene_ids[static_cast<std::size_t>(k)]));
    }
    write_baseline(rc.out, scores);
    out << "otwas scored " << scores.size() << " genes\n";
    return 0;
  }

  if (paths.panel.empty()) throw usage("fit requires --panel (or --dir)");
  if (paths.gwas.empty()) throw usage("fit requires --gwas (or --dir)");
  if (paths.eqtl.empty()) throw usage("fit requires at least one --eqtl (or --dir)");
  const GenotypePanel panel = load_panel(paths.panel);
  std::vector<SummaryVector> eqtls;
  for (const auto& p : paths.eqtl) eqtls.push_back(load_summary(p));
  const CombinedZ combined = combine(load_summary(paths.gwas), std::move(eqtls));
  if (combined.p() != panel.p()) {
    throw Error("cli", "ShapeMismatch", "summary statistics have " + std::to_string(combined.p()) +
                                            " SNPs, panel has " + std::to_string(panel.p()),
                ErrorKind::data);
  }
  const EigenLD eig = svd_panel(panel);
  Rng rng = make_stream(rc.seed.value_or(0), 2);

  if (method == Method::stwas || method == Method::ivw || method == Method::egger) {
    const Vec eta_g = rotate_to_eigen(eig, combined.gwas.z);
    std::vector<BaselineScore> scores;
    for (const auto& e : combined.eqtl) {
      const Vec eta_e = rotate_to_eigen(eig, e.z);
      scores.push_back(method == Method::stwas ? stwas(eta_e, eta_g, e.trait_id)
                       : method == Method::ivw ? ivw(eta_e, eta_g, e.trait_id)
                                               : egger(eta_e, eta_g, e.trait_id));
    }
    write_baseline(rc.out, scores);
    out << to_string(method) << " scored " << scores.size() << " genes\n";
    return 0;
  }

  MediationResult res;
  if (method == Method::naive) {
    res = cammel_naive(combined, eig, rc.mediation, rng);
  } else if (method == Method::fact) {
    res = cammel_fact(combined, eig, rc.mediation, rng);
  } else {
    if (paths.null_panel.empty()) throw usage("proj requires --null-panel (or --dir)");
    res = cammel_proj(combined, eig, load_panel(paths.null_panel), rc.mediation, rng);
  }
  write_mediation(rc.out, res);
  if (!paths.posterior.empty()) write_posterior(paths.posterior, res.predictor_ids, res.posterior);
  if (!paths.factors.empty() && res.factors) write_factors(paths.factors, *res.factors);
  if (!paths.covariates.empty() && res.factors) write_covariates(paths.covariates, res.unmediated);
  Index active = 0;
  for (const auto& g : res.genes) active += g.beta_pip > 0.5;
  out << to_string(method) << ": " << active << " of " << res.genes.size() << " genes with pip > 0.5\n";
  return 0;
}

inline int run_benchmark(const RunConfig& rc, std::ostream& out) {
  if (!rc.seed) throw usage("benchmark requires --seed (flag or config)");
  if (rc.out.empty()) throw usage("benchmark requires --out");
  if (rc.replicates < 1) throw usage("--replicates must be >= 1");
  ExperimentSpec spec;
  spec.scenario = rc.scenario;
  spec.config = rc.scenario_config;
  spec.methods = rc.methods;
  spec.replicates = rc.replicates;
  spec.seed = *rc.seed;
  spec.panel = rc.panel;
  spec.mediation = rc.mediation;
  spec.threads = std::max(1, rc.threads);
  const BenchmarkReport report = run_experiment(spec);
  write_report(rc.out, report);

  json echo = {{"seed", *rc.seed},
               {"scenario_kind", to_string(rc.scenario)},
               {"replicates", rc.replicates},
               {"scenario", to_json(rc.scenario_config)},
               {"panel", to_json(rc.panel)},
               {"svi", to_json(rc.mediation.svi)},
               {"mediation", to_json(rc.mediation)}};
  json methods = json::array();
  for (Method m : rc.methods) methods.push_back(to_string(m));
  echo["methods"] = methods;
  json failures = json::array();
  for (const auto& r : report.rows) {
    if (!r.error.empty()) failures.push_back({{"method", r.method}, {"replicate", r.replicate}, {"error", r.error}});
  }
  echo["failures"] = failures;
  io::write_json(io::sidecar(rc.out), echo);
  out << "wrote " << report.rows.size() << " rows to " << rc.out << "\n";
  return 0;
}

inline int run_report(const std::string& in_path, std::ostream& out) {
  const BenchmarkReport report = load_report(in_path);
  out << "scenario\tmethod\tauprc (mean +- sd)\tn\tfailed\n";
  for (const auto& s : report.summarize()) {
    out << s.scenario << "\t" << s.method << "\t" << std::fixed << std::setprecision(3) << s.mean << " +- "
        << s.sd << "\t" << s.finite << "\t" << s.failed << "\n";
  }
  out.unsetf(std::ios::floatfield);
  return 0;
}

}  // namespace cli_detail

inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
  CLI::App app{"Summary-statistics causal mediation analysis", "cammel"};
  app.set_version_flag("--version", std::string("cammel ") + kVersion);
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config, out_path, scenario, panel, method, in_path;
  std::uint64_t seed = 0;
  int replicates = 0, threads = 1;
  std::vector<std::string> methods;
  cli_detail::FitPaths fp;

  auto* sim = app.add_subcommand("simulate", "simulate a scenario and write summary statistics");
  sim->add_option("--config", config, "JSON config");
  sim->add_option("--out", out_path, "output directory");
  auto* sim_seed = sim->add_option("--seed", seed, "random seed");
  auto* sim_scen = sim->add_option("--scenario", scenario, "polygenic | confounded | custom");
  sim->add_option("--panel", panel, "panel TSV (synthetic panel when omitted)");

  auto* fit = app.add_subcommand("fit", "fit one method on summary statistics");
  fit->add_option("--method", method, "naive | fact | proj | stwas | ivw | egger | otwas")->required();
  fit->add_option("--config", config, "JSON config");
  fit->add_option("--out", out_path, "result TSV");
  auto* fit_seed = fit->add_option("--seed", seed, "random seed");
  fit->add_option("--dir", fp.dir, "directory written by simulate");
  fit->add_option("--panel", fp.panel, "analysis panel TSV");
  fit->add_option("--null-panel", fp.null_panel, "independent panel TSV for proj");
  fit->add_option("--gwas", fp.gwas, "GWAS summary TSV");
  fit->add_option("--eqtl", fp.eqtl, "eQTL summary TSVs in gene order");
  fit->add_option("--expression", fp.expression, "observed expression TSV (otwas)");
  fit->add_option("--phenotype", fp.phenotype, "observed phenotype TSV (otwas)");
  fit->add_option("--posterior", fp.posterior, "also write the full posterior TSV");
  fit->add_option("--factors", fp.factors, "also write factor loadings TSV (fact, proj)");
  fit->add_option("--covariates", fp.covariates, "also write unmediated covariates TSV (fact, proj)");

  auto* bench = app.add_subcommand("benchmark", "run a simulation benchmark");
  bench->add_option("--scenario", scenario, "polygenic | confounded | custom");
  bench->add_option("--config", config, "JSON config");
  auto* bench_reps = bench->add_option("--replicates", replicates, "replicates");
  auto* bench_seed = bench->add_option("--seed", seed, "random seed");
  bench->add_option("--out", out_path, "report TSV");
  bench->add_option("--methods", methods, "methods to run (default all)");

  auto* rep = app.add_subcommand("report", "summarize a benchmark report");
  rep->add_option("--in", in_path, "report TSV")->required();

  app.add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "cli.UsageError: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    auto given_seed = [&](CLI::Option* opt) {
      return opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt;
    };
    std::optional<int> thr;
    if (app.get_option("--threads")->count()) thr.emplace(threads);
    if (sim->parsed()) {
      auto rc = cli_detail::resolve(Subcommand::simulate, config, sim_scen->count() ? scenario : "", given_seed(sim_seed),
                                    std::nullopt, thr, {});
      rc.out = out_path;
      return cli_detail::run_simulate(rc, panel, out);
    }
    if (fit->parsed()) {
      auto rc = cli_detail::resolve(Subcommand::fit, config, "", given_seed(fit_seed), std::nullopt, thr, {});
      rc.out = out_path;
      return cli_detail::run_fit(rc, method, fp, out);
    }
    if (bench->parsed()) {
      auto rc = cli_detail::resolve(Subcommand::benchmark, config, scenario, given_seed(bench_seed),
                                    bench_reps->count() ? std::optional<int>(replicates) : std::nullopt, thr, methods);
      rc.out = out_path;
      return cli_detail::run_benchmark(rc, out);
    }
    return cli_detail::run_report(in_path, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    if (e.kind() == ErrorKind::usage) err << "\n" << app.help();
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "cli.Failure: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
}

}  // namespace cammel
