#pragma once

// TSV / JSON readers and writers. Tables are tab separated with a header
// row; numbers are written with 17 significant digits so they read back
// exactly.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cammel/baselines.hpp"
#include "cammel/bench.hpp"
#include "cammel/factorize.hpp"
#include "cammel/linalg.hpp"
#include "cammel/mediate.hpp"
#include "cammel/simulate.hpp"
#include "cammel/ssvi.hpp"
#include "cammel/sumstats.hpp"

namespace cammel {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace io {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Error parse_error(const fs::path& path, std::size_t line, const std::string& what) {
  return Error("io", "ParseError", path.string() + ":" + std::to_string(line) + ": " + what, ErrorKind::data);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

inline double parse_double(const std::string& s, const fs::path& path, std::size_t line,
                           const std::string& column, bool allow_nan = false) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size() || (errno == ERANGE && std::isinf(v))) {
    throw parse_error(path, line, "column " + column + ": cannot parse '" + s + "'");
  }
  if (!allow_nan && !std::isfinite(v)) {
    throw parse_error(path, line, "column " + column + ": non-finite value '" + s + "'");
  }
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  /// Column positions in the order asked; SchemaError lists all that are absent.
  std::vector<std::size_t> require(const std::vector<std::string>& names, const fs::path& path) const {
    std::vector<std::size_t> pos;
    std::string missing;
    for (const auto& name : names) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) {
        missing += (missing.empty() ? "" : ", ") + name;
      } else {
        pos.push_back(static_cast<std::size_t>(it - header.begin()));
      }
    }
    if (!missing.empty()) {
      throw Error("io", "SchemaError", path.string() + ": missing column(s) " + missing, ErrorKind::data);
    }
    return pos;
  }
};

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "FileNotFound", "cannot open " + path.string(), ErrorKind::data);
  return in;
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "WriteFailed", "cannot write " + path.string(), ErrorKind::data);
  return out;
}

inline Table read_table(const fs::path& path) {
  auto in = open_in(path);
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_tabs(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw parse_error(path, lineno, "expected " + std::to_string(t.header.size()) + " fields, found " +
                                          std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw parse_error(path, lineno, "missing header row");
  return t;
}

inline json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("io", "ParseError", path.string() + ": " + e.what(), ErrorKind::data);
  }
}

inline void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

/// Sidecar metadata lives next to the table: foo.tsv -> foo.json.
inline fs::path sidecar(const fs::path& table) {
  fs::path p = table;
  return p.replace_extension(".json");
}

}  // namespace io

// ---- panels

inline void write_panel(const fs::path& path, const GenotypePanel& panel) {
  auto out = io::open_out(path);
  for (Index j = 0; j < panel.p(); ++j) out << (j ? "\t" : "") << panel.snp_ids[static_cast<std::size_t>(j)];
  out << "\n";
  for (Index i = 0; i < panel.n(); ++i) {
    for (Index j = 0; j < panel.p(); ++j) out << (j ? "\t" : "") << io::fmt(panel.values(i, j));
    out << "\n";
  }
  json blocks = json::array();
  for (const auto& b : panel.blocks) blocks.push_back({b.begin, b.end});
  io::write_json(io::sidecar(path), {{"blocks", blocks}});
}

/// Raw dosages in, standardized panel out. Blocks come from the sidecar
/// when present.
inline GenotypePanel load_panel(const fs::path& path) {
  const io::Table t = io::read_table(path);
  const auto p = static_cast<Index>(t.header.size());
  const auto n = static_cast<Index>(t.rows.size());
  Mat raw(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      raw(i, j) = io::parse_double(t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], path,
                                   t.line_numbers[static_cast<std::size_t>(i)], t.header[static_cast<std::size_t>(j)]);
    }
  }
  std::vector<Block> blocks;
  const fs::path side = io::sidecar(path);
  if (fs::exists(side)) {
    const json j = io::read_json(side);
    if (j.contains("blocks")) {
      for (const auto& b : j.at("blocks")) blocks.push_back({b.at(0).get<Index>(), b.at(1).get<Index>()});
    }
  }
  return standardize(raw, blocks, t.header);
}

// ---- summary statistics

inline void write_summary(const fs::path& path, const SummaryVector& s) {
  auto out = io::open_out(path);
  out << "snp_id\teffect\tse\tz\n";
  for (Index j = 0; j < s.p(); ++j) {
    const std::string id = j < static_cast<Index>(s.snp_ids.size()) ? s.snp_ids[static_cast<std::size_t>(j)]
                                                                      : "snp" + std::to_string(j);
    out << id << "\t" << io::fmt(s.effect(j)) << "\t" << io::fmt(s.se(j)) << "\t" << io::fmt(s.z(j)) << "\n";
  }
  io::write_json(io::sidecar(path), {{"trait_id", s.trait_id}, {"n", s.n_samples}});
}

inline SummaryVector load_summary(const fs::path& path) {
  const io::Table t = io::read_table(path);
  const auto col = t.require({"snp_id", "effect", "se", "z"}, path);
  SummaryVector s;
  const auto p = static_cast<Index>(t.rows.size());
  s.effect.resize(p);
  s.se.resize(p);
  s.z.resize(p);
  for (Index j = 0; j < p; ++j) {
    const auto& row = t.rows[static_cast<std::size_t>(j)];
    const std::size_t line = t.line_numbers[static_cast<std::size_t>(j)];
    s.snp_ids.push_back(row[col[0]]);
    s.effect(j) = io::parse_double(row[col[1]], path, line, "effect");
    s.se(j) = io::parse_double(row[col[2]], path, line, "se");
    s.z(j) = io::parse_double(row[col[3]], path, line, "z");
  }
  s.trait_id = path.stem().string();
  const fs::path side = io::sidecar(path);
  if (fs::exists(side)) {
    const json j = io::read_json(side);
    s.trait_id = j.value("trait_id", s.trait_id);
    s.n_samples = j.value("n", Index{0});
  }
  return s;
}

// ---- model outputs

inline void write_posterior(const fs::path& path, const std::vector<std::string>& ids,
                            const SpikeSlabPosterior& post) {
  auto out = io::open_out(path);
  out << "predictor_id\tpip\tmean\tvar\n";
  for (Index j = 0; j < post.pip.size(); ++j) {
    const std::string id = j < static_cast<Index>(ids.size()) ? ids[static_cast<std::size_t>(j)] : "x" + std::to_string(j);
    out << id << "\t" << io::fmt(post.pip(j)) << "\t" << io::fmt(post.mean(j)) << "\t" << io::fmt(post.var(j)) << "\n";
  }
}

inline void write_mediation(const fs::path& path, const MediationResult& res) {
  auto out = io::open_out(path);
  out << "gene_id\tbeta_mean\tbeta_pip\tsign\n";
  for (const auto& g : res.genes) {
    out << g.gene_id << "\t" << io::fmt(g.beta_mean) << "\t" << io::fmt(g.beta_pip) << "\t" << g.beta_sign << "\n";
  }
}

inline void write_baseline(const fs::path& path, const std::vector<BaselineScore>& scores) {
  auto out = io::open_out(path);
  out << "gene_id\tstatistic\tsign\n";
  for (const auto& s : scores) out << s.gene_id << "\t" << io::fmt(s.statistic) << "\t" << s.sign << "\n";
}

inline void write_factors(const fs::path& path, const FactorModel& model) {
  auto out = io::open_out(path);
  out << "factor_id\ttrait_id\tomega_mean\tomega_pip\n";
  for (Index l = 0; l < model.L(); ++l) {
    for (Index t = 0; t < model.Omega.rows(); ++t) {
      out << "factor" << l << "\t" << model.trait_ids[static_cast<std::size_t>(t)] << "\t"
          << io::fmt(model.Omega(t, l)) << "\t" << io::fmt(model.omega_pip(t, l)) << "\n";
    }
  }
}

inline void write_covariates(const fs::path& path, const UnmediatedCovariates& cov) {
  auto out = io::open_out(path);
  for (Index l = 0; l < cov.L(); ++l) out << (l ? "\t" : "") << "factor" << cov.selected[static_cast<std::size_t>(l)];
  out << "\n";
  for (Index j = 0; j < cov.z_unmed.rows(); ++j) {
    for (Index l = 0; l < cov.L(); ++l) out << (l ? "\t" : "") << io::fmt(cov.z_unmed(j, l));
    out << "\n";
  }
}

// ---- observed data for oTWAS

inline void write_observed(const fs::path& expression_path, const fs::path& phenotype_path,
                           const ScenarioData& data) {
  auto ex = io::open_out(expression_path);
  const Index K = data.observed_expression.cols();
  for (Index k = 0; k < K; ++k) ex << (k ? "\t" : "") << data.combined.eqtl[static_cast<std::size_t>(k)].trait_id;
  ex << "\n";
  for (Index i = 0; i < data.observed_expression.rows(); ++i) {
    for (Index k = 0; k < K; ++k) ex << (k ? "\t" : "") << io::fmt(data.observed_expression(i, k));
    ex << "\n";
  }
  auto ph = io::open_out(phenotype_path);
  ph << "y\n";
  for (Index i = 0; i < data.observed_phenotype.size(); ++i) ph << io::fmt(data.observed_phenotype(i)) << "\n";
}

struct ObservedData {
  std::vector<std::string> gene_ids;
  Mat expression;  // n x K
  Vec phenotype;
};

inline ObservedData load_observed(const fs::path& expression_path, const fs::path& phenotype_path) {
  ObservedData out;
  const io::Table ex = io::read_table(expression_path);
  out.gene_ids = ex.header;
  out.expression.resize(static_cast<Index>(ex.rows.size()), static_cast<Index>(ex.header.size()));
  for (std::size_t i = 0; i < ex.rows.size(); ++i)
    for (std::size_t k = 0; k < ex.header.size(); ++k)
      out.expression(static_cast<Index>(i), static_cast<Index>(k)) =
          io::parse_double(ex.rows[i][k], expression_path, ex.line_numbers[i], ex.header[k]);
  const io::Table ph = io::read_table(phenotype_path);
  const auto col = ph.require({"y"}, phenotype_path);
  out.phenotype.resize(static_cast<Index>(ph.rows.size()));
  for (std::size_t i = 0; i < ph.rows.size(); ++i)
    out.phenotype(static_cast<Index>(i)) = io::parse_double(ph.rows[i][col[0]], phenotype_path, ph.line_numbers[i], "y");
  if (out.phenotype.size() != out.expression.rows()) {
    throw Error("io", "ShapeMismatch", "expression and phenotype have different sample counts", ErrorKind::data);
  }
  return out;
}

// ---- configuration and truth

inline json to_json(const ScenarioConfig& c) {
  json j = {{"K", c.K},
            {"n_causal", c.n_causal},
            {"d", c.d},
            {"g_g2", c.g_g2},
            {"h_m2", c.h_m2},
            {"g_u2", c.g_u2},
            {"h_u2", c.h_u2},
            {"missing_frac", c.missing_frac},
            {"variance_model", c.variance_model == VarianceModel::symmetric ? "symmetric" : "asymmetric"},
            {"window_size", c.window_size},
            {"seed", c.seed}};
  j["pleiotropy"] = c.pleiotropy ? json{{"magnitude", c.pleiotropy->magnitude}, {"noise_sd", c.pleiotropy->noise_sd}}
                                 : json(nullptr);
  return j;
}

inline ScenarioConfig scenario_from_json(const json& j, ScenarioConfig c) {
  try {
    c.K = j.value("K", c.K);
    c.n_causal = j.value("n_causal", c.n_causal);
    c.d = j.value("d", c.d);
    c.g_g2 = j.value("g_g2", c.g_g2);
    c.h_m2 = j.value("h_m2", c.h_m2);
    c.g_u2 = j.value("g_u2", c.g_u2);
    c.h_u2 = j.value("h_u2", c.h_u2);
    c.missing_frac = j.value("missing_frac", c.missing_frac);
    c.window_size = j.value("window_size", c.window_size);
    if (j.contains("variance_model")) {
      const auto vm = j.at("variance_model").get<std::string>();
      if (vm != "symmetric" && vm != "asymmetric") {
        throw Error("io", "ConfigInvalid", "variance_model must be symmetric or asymmetric", ErrorKind::usage);
      }
      c.variance_model = vm == "symmetric" ? VarianceModel::symmetric : VarianceModel::asymmetric;
    }
    if (j.contains("pleiotropy")) {
      const json& pl = j.at("pleiotropy");
      if (pl.is_null() || (pl.is_string() && pl.get<std::string>() == "none")) {
        c.pleiotropy.reset();
      } else {
        DirectionalPleiotropy d = c.pleiotropy.value_or(DirectionalPleiotropy{});
        d.magnitude = pl.value("magnitude", d.magnitude);
        d.noise_sd = pl.value("noise_sd", d.noise_sd);
        c.pleiotropy = d;
      }
    }
  } catch (const json::exception& e) {
    throw Error("io", "ConfigInvalid", std::string("scenario config: ") + e.what(), ErrorKind::usage);
  }
  return c;
}

inline SviOptions svi_from_json(const json& j, SviOptions o) {
  try {
    o.iterations = j.value("iterations", o.iterations);
    o.step_size = j.value("step_size", o.step_size);
    o.mc_samples = j.value("mc_samples", o.mc_samples);
    o.learn_residual = j.value("learn_residual", o.learn_residual);
    o.residual_var_init = j.value("residual_var_init", o.residual_var_init);
    o.convergence_tol = j.value("convergence_tol", o.convergence_tol);
    o.convergence_window = j.value("convergence_window", o.convergence_window);
  } catch (const json::exception& e) {
    throw Error("io", "ConfigInvalid", std::string("svi config: ") + e.what(), ErrorKind::usage);
  }
  return o;
}

inline json to_json(const SviOptions& o) {
  return {{"iterations", o.iterations},         {"step_size", o.step_size},
          {"mc_samples", o.mc_samples},         {"learn_residual", o.learn_residual},
          {"residual_var_init", o.residual_var_init}, {"convergence_tol", o.convergence_tol},
          {"convergence_window", o.convergence_window}};
}

inline MediationOptions mediation_from_json(const json& j, MediationOptions o) {
  try {
    if (j.contains("svi")) o.svi = svi_from_json(j.at("svi"), o.svi);
    if (!j.contains("mediation")) return o;
    const json& m = j.at("mediation");
    o.max_factors = m.value("max_factors", o.max_factors);
    o.pip_threshold = m.value("pip_threshold", o.pip_threshold);
    o.dense_fraction = m.value("dense_fraction", o.dense_fraction);
    o.gene_slab_var = m.value("gene_slab_var", o.gene_slab_var);
    o.covariate_slab_var = m.value("covariate_slab_var", o.covariate_slab_var);
    o.learn_priors = m.value("learn_priors", o.learn_priors);
    o.max_cross_corr = m.value("max_cross_corr", o.max_cross_corr);
    if (m.contains("whitening")) {
      const auto w = m.at("whitening").get<std::string>();
      if (w != "full" && w != "d2_weighted") {
        throw Error("io", "ConfigInvalid", "whitening must be full or d2_weighted", ErrorKind::usage);
      }
      o.whitening = w == "full" ? Whitening::full : Whitening::d2_weighted;
    }
  } catch (const json::exception& e) {
    throw Error("io", "ConfigInvalid", std::string("mediation config: ") + e.what(), ErrorKind::usage);
  }
  return o;
}

inline json to_json(const MediationOptions& o) {
  return {{"max_factors", o.max_factors},
          {"pip_threshold", o.pip_threshold},
          {"dense_fraction", o.dense_fraction},
          {"gene_slab_var", o.gene_slab_var},
          {"covariate_slab_var", o.covariate_slab_var},
          {"learn_priors", o.learn_priors},
          {"max_cross_corr", o.max_cross_corr},
          {"whitening", o.whitening == Whitening::full ? "full" : "d2_weighted"}};
}

inline PanelSpec panel_from_json(const json& j, PanelSpec s) {
  try {
    s.n = j.value("n", s.n);
    s.block_sizes = j.value("block_sizes", s.block_sizes);
    s.rho = j.value("rho", s.rho);
    s.analysis_blocks = j.value("analysis_blocks", s.analysis_blocks);
  } catch (const json::exception& e) {
    throw Error("io", "ConfigInvalid", std::string("panel config: ") + e.what(), ErrorKind::usage);
  }
  return s;
}

inline json to_json(const PanelSpec& s) {
  return {{"n", s.n}, {"block_sizes", s.block_sizes}, {"rho", s.rho}, {"analysis_blocks", s.analysis_blocks}};
}

inline json truth_json(const ScenarioData& data) {
  json causal = json::array();
  for (const auto& c : data.truth.causal_set) {
    causal.push_back({{"gene", c.gene}, {"gene_id", detail::gene_id(c.gene)}, {"sign", c.sign},
                      {"beta", data.truth.beta(c.gene)}});
  }
  json windows = json::array();
  for (const auto& w : data.truth.gene_windows) windows.push_back({w.begin, w.end});
  return {{"causal_set", causal},
          {"missing_set", data.truth.missing_set},
          {"tau0_2", data.truth.tau0_2},
          {"sigma0_2", data.truth.sigma0_2},
          {"pleiotropy_direction", data.truth.pleiotropy_direction},
          {"gene_windows", windows},
          {"config", to_json(data.config)}};
}

// ---- benchmark reports

inline void write_report(const fs::path& path, const BenchmarkReport& report) {
  auto out = io::open_out(path);
  out << "scenario\tmethod\treplicate\tauprc\n";
  for (const auto& r : report.rows) {
    out << r.scenario << "\t" << r.method << "\t" << r.replicate << "\t" << io::fmt(r.auprc) << "\n";
  }
}

inline BenchmarkReport load_report(const fs::path& path) {
  const io::Table t = io::read_table(path);
  const auto col = t.require({"scenario", "method", "replicate", "auprc"}, path);
  BenchmarkReport report;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    ReportRow r;
    r.scenario = row[col[0]];
    r.method = row[col[1]];
    r.replicate = static_cast<int>(io::parse_double(row[col[2]], path, t.line_numbers[i], "replicate"));
    r.auprc = io::parse_double(row[col[3]], path, t.line_numbers[i], "auprc", true);
    report.rows.push_back(std::move(r));
  }
  return report;
}

}  // namespace cammel
