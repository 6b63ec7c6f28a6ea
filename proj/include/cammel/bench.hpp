#pragma once

// Benchmark harness: simulate a scenario per replicate, run each method on
// the summary data (oTWAS sees the observed data), and score the gene
// ranking with sign-aware average precision.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cammel/baselines.hpp"
#include "cammel/mediate.hpp"
#include "cammel/simulate.hpp"

namespace cammel {

struct PredictionRow {
  std::string gene_id;
  double score = 0.0;  // ranking key, larger first
  int predicted_sign = 0;
  bool true_is_causal = false;
  int true_sign = 0;
};

using PredictionTable = std::vector<PredictionRow>;

/// Average precision where a hit needs a causal gene with the right sign.
/// Every causal gene counts in the denominator, so wrong-sign causal genes
/// are never recovered.
inline double auprc_signed(const PredictionTable& table) {
  std::size_t positives = 0;
  for (const auto& row : table) {
    if (!std::isfinite(row.score)) throw Error("bench", "NonFiniteScore", "score for " + row.gene_id);
    positives += row.true_is_causal;
  }
  if (positives == 0) throw Error("bench", "NoPositives", "no causal gene in table", ErrorKind::data);
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (table[a].score != table[b].score) return table[a].score > table[b].score;
    return table[a].gene_id < table[b].gene_id;
  });
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& row = table[order[rank]];
    if (row.true_is_causal && row.predicted_sign == row.true_sign && row.true_sign != 0) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

enum class Method { naive, fact, proj, stwas, ivw, egger, otwas };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::naive: return "cammel_naive";
    case Method::fact: return "cammel_fact";
    case Method::proj: return "cammel_proj";
    case Method::stwas: return "stwas";
    case Method::ivw: return "ivw";
    case Method::egger: return "egger";
    case Method::otwas: return "otwas";
  }
  return "?";
}

/// Accepts both the short CLI names (naive, fact, proj) and the report names.
inline Method parse_method(const std::string& s) {
  for (Method m : {Method::naive, Method::fact, Method::proj, Method::stwas, Method::ivw, Method::egger,
                   Method::otwas}) {
    const std::string name = to_string(m);
    if (s == name || "cammel_" + s == name) return m;
  }
  throw Error("bench", "UnknownMethod", "unknown method '" + s + "'", ErrorKind::usage);
}

inline std::vector<Method> all_methods() {
  return {Method::naive, Method::fact, Method::proj, Method::stwas, Method::ivw, Method::egger, Method::otwas};
}

/// Reference panel layout: the leading analysis_blocks blocks form the
/// analysis region, the remaining blocks the null block used by proj.
struct PanelSpec {
  Index n = 300;
  std::vector<Index> block_sizes{200, 200, 200, 200, 200};
  double rho = 0.9;
  // the null region should hold at least n SNPs so projected confounders
  // keep their full sample-level shape
  Index analysis_blocks = 3;
};

struct BenchPanels {
  GenotypePanel analysis;
  GenotypePanel null_block;
  EigenLD eig;
};

inline BenchPanels make_panels(const PanelSpec& spec, std::uint64_t seed) {
  if (spec.analysis_blocks < 1 || spec.analysis_blocks >= static_cast<Index>(spec.block_sizes.size())) {
    throw Error("bench", "ConfigInvalid", "need analysis blocks and at least one null block", ErrorKind::usage);
  }
  Rng rng = make_stream(seed, 0xb10cULL);
  const GenotypePanel full = synthetic_panel(spec.n, spec.block_sizes, spec.rho, rng);
  const Index split = full.blocks[static_cast<std::size_t>(spec.analysis_blocks)].begin;
  BenchPanels out{full.slice({0, split}), full.slice({split, full.p()}), {}};
  out.eig = svd_panel(out.analysis);
  return out;
}

/// Ranking table for one method on one simulated data set.
inline PredictionTable predict(Method method, const ScenarioData& data, const BenchPanels& panels,
                               const MediationOptions& opts, Rng& rng) {
  const auto& comb = data.combined;
  const Index K = comb.num_genes();
  PredictionTable table(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) {
    auto& row = table[static_cast<std::size_t>(k)];
    row.gene_id = comb.eqtl[static_cast<std::size_t>(k)].trait_id;
    row.true_is_causal = data.truth.is_causal(k);
    row.true_sign = data.truth.true_sign(k);
  }
  auto fill_mediation = [&](const MediationResult& res) {
    for (Index k = 0; k < K; ++k) {
      auto& row = table[static_cast<std::size_t>(k)];
      row.score = res.genes[static_cast<std::size_t>(k)].beta_pip;
      row.predicted_sign = res.genes[static_cast<std::size_t>(k)].beta_sign;
    }
  };
  switch (method) {
    case Method::naive: fill_mediation(cammel_naive(comb, panels.eig, opts, rng)); break;
    case Method::fact: fill_mediation(cammel_fact(comb, panels.eig, opts, rng)); break;
    case Method::proj: fill_mediation(cammel_proj(comb, panels.eig, panels.null_block, opts, rng)); break;
    case Method::otwas:
      for (Index k = 0; k < K; ++k) {
        const auto s = otwas(data.observed_expression.col(k), data.observed_phenotype);
        table[static_cast<std::size_t>(k)].score = std::abs(s.statistic);
        table[static_cast<std::size_t>(k)].predicted_sign = s.sign;
      }
      break;
    default: {
      const Vec eta_g = rotate_to_eigen(panels.eig, comb.gwas.z);
      for (Index k = 0; k < K; ++k) {
        const Vec eta_e = rotate_to_eigen(panels.eig, comb.eqtl[static_cast<std::size_t>(k)].z);
        const BaselineScore s = method == Method::stwas ? stwas(eta_e, eta_g)
                                : method == Method::ivw ? ivw(eta_e, eta_g)
                                                        : egger(eta_e, eta_g);
        table[static_cast<std::size_t>(k)].score = std::abs(s.statistic);
        table[static_cast<std::size_t>(k)].predicted_sign = s.sign;
      }
    }
  }
  return table;
}

enum class ScenarioKind { polygenic, confounded, custom };

inline std::string to_string(ScenarioKind s) {
  switch (s) {
    case ScenarioKind::polygenic: return "polygenic";
    case ScenarioKind::confounded: return "confounded";
    case ScenarioKind::custom: return "custom";
  }
  return "?";
}

inline ScenarioKind parse_scenario(const std::string& s) {
  for (ScenarioKind k : {ScenarioKind::polygenic, ScenarioKind::confounded, ScenarioKind::custom})
    if (to_string(k) == s) return k;
  throw Error("bench", "UnknownScenario", "unknown scenario '" + s + "'", ErrorKind::usage);
}

inline ScenarioData simulate_for(ScenarioKind kind, const GenotypePanel& panel, const ScenarioConfig& cfg,
                                 Rng& rng) {
  switch (kind) {
    case ScenarioKind::polygenic: return scenario_polygenic(panel, cfg, rng);
    case ScenarioKind::confounded: return scenario_confounded(panel, cfg, rng);
    case ScenarioKind::custom: break;
  }
  return simulate_scenario(panel, cfg, rng);
}

struct ExperimentSpec {
  std::string label;  // scenario column in the report; defaults to the kind
  ScenarioKind scenario = ScenarioKind::custom;
  ScenarioConfig config;
  std::vector<Method> methods = all_methods();
  int replicates = 20;
  std::uint64_t seed = 0;
  PanelSpec panel;
  MediationOptions mediation;
  int threads = 1;
};

struct ReportRow {
  std::string scenario;
  std::string method;
  int replicate = 0;
  double auprc = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty when the method ran
};

struct MethodSummary {
  std::string scenario;
  std::string method;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  int finite = 0;
  int failed = 0;
};

struct BenchmarkReport {
  std::vector<ReportRow> rows;  // ordered by replicate, then method
  std::uint64_t seed = 0;

  /// Mean and sample sd over finite rows, per (scenario, method) in first-seen order.
  std::vector<MethodSummary> summarize() const {
    std::vector<MethodSummary> out;
    auto find = [&](const ReportRow& r) -> MethodSummary& {
      for (auto& s : out)
        if (s.scenario == r.scenario && s.method == r.method) return s;
      MethodSummary s;
      s.scenario = r.scenario;
      s.method = r.method;
      out.push_back(s);
      return out.back();
    };
    std::vector<std::vector<double>> values;
    for (const auto& r : rows) {
      MethodSummary& s = find(r);
      const auto idx = static_cast<std::size_t>(&s - out.data());
      if (values.size() <= idx) values.resize(idx + 1);
      if (std::isfinite(r.auprc)) {
        values[idx].push_back(r.auprc);
      } else {
        ++s.failed;
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& v = i < values.size() ? values[i] : std::vector<double>{};
      out[i].finite = static_cast<int>(v.size());
      if (v.empty()) continue;
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      out[i].mean = mean;
      out[i].sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    }
    return out;
  }

  double mean_of(const std::string& method) const {
    for (const auto& s : summarize())
      if (s.method == method) return s.mean;
    return std::numeric_limits<double>::quiet_NaN();
  }
};

/// Each replicate draws from its own stream (seed, replicate); each method
/// inside it from (seed, replicate, method), so results do not depend on
/// thread scheduling or on which methods are requested.
inline BenchmarkReport run_experiment(const ExperimentSpec& spec) {
  if (spec.replicates < 1) throw Error("bench", "ConfigInvalid", "replicates >= 1", ErrorKind::usage);
  if (spec.methods.empty()) throw Error("bench", "ConfigInvalid", "no methods", ErrorKind::usage);
  const std::string label = spec.label.empty() ? to_string(spec.scenario) : spec.label;
  const BenchPanels panels = make_panels(spec.panel, spec.seed);
  validate(spec.config, panels.analysis.p());

  const auto M = spec.methods.size();
  std::vector<ReportRow> rows(static_cast<std::size_t>(spec.replicates) * M);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < spec.replicates; rep = next++) {
      const auto base = static_cast<std::size_t>(rep) * M;
      for (std::size_t m = 0; m < M; ++m) {
        ReportRow& row = rows[base + m];
        row.scenario = label;
        row.method = to_string(spec.methods[m]);
        row.replicate = rep;
      }
      std::optional<ScenarioData> data;
      try {
        Rng rng = make_stream(spec.seed, 2 * static_cast<std::uint64_t>(rep) + 1);
        data = simulate_for(spec.scenario, panels.analysis, spec.config, rng);
      } catch (const std::exception& e) {
        for (std::size_t m = 0; m < M; ++m) rows[base + m].error = std::string("simulate: ") + e.what();
        continue;
      }
      for (std::size_t m = 0; m < M; ++m) {
        try {
          Rng rng = make_stream(splitmix64(spec.seed) ^ static_cast<std::uint64_t>(rep),
                                static_cast<std::uint64_t>(spec.methods[m]) + 1);
          rows[base + m].auprc = auprc_signed(predict(spec.methods[m], *data, panels, spec.mediation, rng));
        } catch (const std::exception& e) {
          rows[base + m].error = e.what();
        }
      }
    }
  };
  const int threads = std::clamp(spec.threads, 1, spec.replicates);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  BenchmarkReport report;
  report.rows = std::move(rows);
  report.seed = spec.seed;
  return report;
}

}  // namespace cammel
