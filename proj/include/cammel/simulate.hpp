#pragma once

// Ground-truth scenario generator: eQTL effects, mediation effects, missing
// genes, polygenic bias and shared non-genetic confounders. Only summary
// statistics (plus observed data for the observed-expression baseline) leave
// this module; the genetic components m^(g), y^(g) are never exposed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cammel/rng.hpp"
#include "cammel/sumstats.hpp"

namespace cammel {

enum class VarianceModel { symmetric, asymmetric };

/// Directional pleiotropy: gamma_j = direction * magnitude + N(0, noise_sd^2).
struct DirectionalPleiotropy {
  double magnitude = 1.0;
  double noise_sd = std::sqrt(10.0);
};

struct ScenarioConfig {
  Index K = 100;
  Index n_causal = 1;
  Index d = 3;             // causal eQTL SNPs per gene
  double g_g2 = 0.3;       // genetic expression variance
  double h_m2 = 0.25;      // mediated phenotype variance
  double g_u2 = 0.0;       // confounder variance on genes
  double h_u2 = 0.0;       // confounder / bias variance on phenotype
  double missing_frac = 0.0;
  VarianceModel variance_model = VarianceModel::symmetric;
  std::optional<DirectionalPleiotropy> pleiotropy;  // none when empty
  std::vector<Block> gene_windows;                  // auto layout when empty
  Index window_size = 40;
  std::uint64_t seed = 0;
};

inline void validate(const ScenarioConfig& cfg, Index p) {
  auto fail = [](const std::string& what) {
    throw Error("simulate", "ConfigInvalid", what, ErrorKind::usage);
  };
  if (cfg.K < 1) fail("K >= 1");
  if (cfg.d < 1) fail("d >= 1");
  if (cfg.n_causal < 0 || cfg.n_causal > cfg.K) fail("n_causal <= K");
  if (!(cfg.g_g2 > 0.0 && cfg.g_g2 < 1.0)) fail("g_g2 in (0,1)");
  if (!(cfg.h_m2 >= 0.0 && cfg.h_m2 < 1.0)) fail("h_m2 in [0,1)");
  if (!(cfg.g_u2 >= 0.0 && cfg.g_u2 < 1.0)) fail("g_u2 in [0,1)");
  if (!(cfg.h_u2 >= 0.0 && cfg.h_u2 < 1.0)) fail("h_u2 in [0,1)");
  if (!(cfg.g_g2 + cfg.g_u2 < 1.0)) fail("g_g2 + g_u2 < 1");
  if (!(cfg.h_m2 + cfg.h_u2 < 1.0)) fail("h_m2 + h_u2 < 1");
  if (!(cfg.missing_frac >= 0.0 && cfg.missing_frac < 1.0)) fail("missing_frac in [0,1)");
  if (cfg.pleiotropy && !(cfg.pleiotropy->noise_sd >= 0.0)) fail("pleiotropy noise_sd >= 0");
  if (!cfg.gene_windows.empty()) {
    if (static_cast<Index>(cfg.gene_windows.size()) != cfg.K) fail("one gene window per gene");
    for (const auto& w : cfg.gene_windows) {
      if (w.begin < 0 || w.end > p || w.size() < 1) fail("gene window inside [0,p)");
    }
  } else if (cfg.window_size < 1) {
    fail("window_size >= 1");
  }
}

/// Evenly spaced gene windows of the configured width, each clipped to the LD
/// block holding its center.
inline std::vector<Block> layout_gene_windows(const GenotypePanel& panel, Index K, Index width) {
  std::vector<Block> out;
  out.reserve(static_cast<std::size_t>(K));
  const double step = static_cast<double>(panel.p()) / static_cast<double>(K);
  for (Index k = 0; k < K; ++k) {
    const Index center = std::min<Index>(panel.p() - 1, static_cast<Index>((k + 0.5) * step));
    Block home{0, panel.p()};
    for (const auto& b : panel.blocks)
      if (center >= b.begin && center < b.end) home = b;
    Index lo = std::max(home.begin, center - width / 2);
    Index hi = std::min(home.end, lo + width);
    lo = std::max(home.begin, hi - width);
    out.push_back({lo, hi});
  }
  return out;
}

struct CausalGene {
  Index gene = 0;
  int sign = 1;
  bool operator==(const CausalGene&) const = default;
};

struct ScenarioTruth {
  Mat alpha;                          // p x K eQTL effects
  Vec beta;                           // K mediation effects
  std::vector<CausalGene> causal_set;
  Vec gamma;                          // p unmediated effects (zero without pleiotropy)
  Vec u;                              // n confounder / bias vector
  Vec xi;                             // K+1 confounder loadings (phenotype first)
  std::vector<Index> missing_set;
  std::vector<Block> gene_windows;
  double tau0_2 = 0.0;
  double sigma0_2 = 0.0;
  int pleiotropy_direction = 0;

  bool is_causal(Index k) const {
    return std::any_of(causal_set.begin(), causal_set.end(),
                       [k](const CausalGene& c) { return c.gene == k; });
  }
  int true_sign(Index k) const {
    for (const auto& c : causal_set)
      if (c.gene == k) return c.sign;
    return 0;
  }
};

struct ScenarioData {
  CombinedZ combined;
  Mat observed_expression;  // n x K
  Vec observed_phenotype;   // n
  ScenarioTruth truth;
  ScenarioConfig config;
};

namespace detail {

inline double pop_var(const Vec& v) {
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size());
}

/// Scale v (and report the factor) so its population variance equals target.
inline double rescale_to(Vec& v, double target) {
  const double var = pop_var(v);
  if (!(var > 0.0) || target <= 0.0) {
    v.setZero();
    return 0.0;
  }
  const double s = std::sqrt(target / var);
  v *= s;
  return s;
}

/// First m entries of a uniformly random permutation of [begin, end).
inline std::vector<Index> sample_without_replacement(Index begin, Index end, Index m, Rng& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(end - begin));
  std::iota(pool.begin(), pool.end(), begin);
  m = std::min<Index>(m, static_cast<Index>(pool.size()));
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(m));
  return pool;
}

inline std::string gene_id(Index k) { return "gene" + std::to_string(k); }

}  // namespace detail

/// Synthetic reference panel: per-block AR(1) correlated standard normals,
/// then standardized. Blocks are mutually independent.
inline GenotypePanel synthetic_panel(Index n, const std::vector<Index>& block_sizes, double rho,
                                     Rng& rng) {
  Index p = 0;
  std::vector<Block> blocks;
  for (Index s : block_sizes) {
    blocks.push_back({p, p + s});
    p += s;
  }
  Mat raw(n, p);
  const double innov = std::sqrt(1.0 - rho * rho);
  for (const auto& b : blocks) {
    raw.col(b.begin) = randn(n, rng);
    for (Index j = b.begin + 1; j < b.end; ++j) {
      raw.col(j) = rho * raw.col(j - 1) + innov * randn(n, rng);
    }
  }
  return standardize(raw, blocks);
}

struct PolygenicBias {
  Vec u;      // X gamma
  Vec gamma;  // per-SNP effects
  int direction = 0;
};

/// u = X gamma, gamma_j = direction * magnitude + N(0, noise_sd^2), with the
/// direction drawn once from {+1, -1}.
inline PolygenicBias simulate_polygenic_bias(const GenotypePanel& panel, double magnitude,
                                             double noise_sd, Rng& rng) {
  if (!(noise_sd >= 0.0)) throw Error("simulate", "ConfigInvalid", "noise_sd >= 0", ErrorKind::usage);
  PolygenicBias out;
  out.direction = runif(rng) < 0.5 ? -1 : 1;
  out.gamma = Vec::Constant(panel.p(), out.direction * magnitude);
  if (noise_sd > 0.0) out.gamma += noise_sd * randn(panel.p(), rng);
  out.u = panel.values * out.gamma;
  return out;
}

inline ScenarioData simulate_scenario(const GenotypePanel& panel, const ScenarioConfig& cfg,
                                      Rng& rng) {
  validate(cfg, panel.p());
  const Index n = panel.n(), p = panel.p(), K = cfg.K;
  const Mat& X = panel.values;

  ScenarioTruth truth;
  truth.gene_windows =
      cfg.gene_windows.empty() ? layout_gene_windows(panel, K, cfg.window_size) : cfg.gene_windows;

  // 1. heritable expression for every gene, rescaled to V[m^(g)] = g_g2
  truth.alpha = Mat::Zero(p, K);
  Mat mg(n, K);
  for (Index k = 0; k < K; ++k) {
    const Block w = truth.gene_windows[static_cast<std::size_t>(k)];
    const auto snps = detail::sample_without_replacement(w.begin, w.end, cfg.d, rng);
    const double sd = std::sqrt(cfg.g_g2 / static_cast<double>(cfg.d));
    for (Index j : snps) truth.alpha(j, k) = sd * randn(rng);
    Vec m = X * truth.alpha.col(k);
    const double s = detail::rescale_to(m, cfg.g_g2);
    if (s == 0.0) {
      // all sampled effects vanished; fall back to a unit effect on the first SNP
      truth.alpha(snps.front(), k) = 1.0;
      m = X * truth.alpha.col(k);
      truth.alpha.col(k) *= detail::rescale_to(m, cfg.g_g2);
    } else {
      truth.alpha.col(k) *= s;
    }
    mg.col(k) = m;
  }

  truth.tau0_2 = 1.0 - cfg.g_g2 - cfg.g_u2;
  truth.sigma0_2 = 1.0 - cfg.h_m2 - cfg.h_u2;
  const Mat delta = std::sqrt(truth.tau0_2) * randn(n, K, rng);

  // 2. mediation effects on causal genes
  truth.beta = Vec::Zero(K);
  Vec yg = Vec::Zero(n);
  if (cfg.h_m2 > 0.0 && cfg.n_causal > 0) {
    const auto causal = detail::sample_without_replacement(0, K, cfg.n_causal, rng);
    const double sd = std::sqrt(cfg.h_m2 / static_cast<double>(cfg.n_causal));
    for (Index k : causal) truth.beta(k) = sd * randn(rng);
    for (Index k : causal) {
      Vec mediator = mg.col(k);
      if (cfg.variance_model == VarianceModel::asymmetric) mediator += delta.col(k);
      yg += truth.beta(k) * mediator;
    }
    const double s = detail::rescale_to(yg, cfg.h_m2);
    truth.beta *= s;
    std::vector<Index> sorted = causal;
    std::sort(sorted.begin(), sorted.end());
    for (Index k : sorted) {
      if (truth.beta(k) != 0.0) truth.causal_set.push_back({k, truth.beta(k) > 0 ? 1 : -1});
    }
  }

  // 3-4. structured random effect shared by genes and phenotype
  truth.gamma = Vec::Zero(p);
  truth.xi = randn(K + 1, rng);
  if (cfg.pleiotropy) {
    auto bias = simulate_polygenic_bias(panel, cfg.pleiotropy->magnitude,
                                        cfg.pleiotropy->noise_sd, rng);
    truth.u = std::move(bias.u);
    truth.gamma = std::move(bias.gamma);
    truth.pleiotropy_direction = bias.direction;
    truth.xi(0) = 1.0;
  } else {
    truth.u = randn(n, rng);
  }
  Mat mu(n, K);
  for (Index k = 0; k < K; ++k) {
    Vec c = truth.u * truth.xi(k + 1);
    detail::rescale_to(c, cfg.g_u2);
    mu.col(k) = c;
  }
  Vec yu = truth.u * truth.xi(0);
  const double su = detail::rescale_to(yu, cfg.h_u2);
  if (cfg.pleiotropy) truth.gamma *= su;

  // 5. missing genes lose their genetic component
  const auto n_missing =
      static_cast<Index>(std::llround(cfg.missing_frac * static_cast<double>(K)));
  truth.missing_set = detail::sample_without_replacement(0, K, n_missing, rng);
  std::sort(truth.missing_set.begin(), truth.missing_set.end());
  for (Index k : truth.missing_set) mg.col(k) = std::sqrt(cfg.g_g2) * randn(n, rng);

  // 6-7. observed expression and phenotype
  ScenarioData out;
  out.observed_expression = mg + mu + delta;
  out.observed_phenotype = yg + yu + std::sqrt(truth.sigma0_2) * randn(n, rng);

  SummaryVector gwas = summarize_trait(panel, out.observed_phenotype, "gwas");
  std::vector<SummaryVector> eqtl;
  eqtl.reserve(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) {
    eqtl.push_back(summarize_trait(panel, out.observed_expression.col(k), detail::gene_id(k)));
  }
  out.combined = combine(std::move(gwas), std::move(eqtl));
  out.truth = std::move(truth);
  out.config = cfg;
  return out;
}

/// Directional polygenic bias with a large share of missing eQTL genes.
inline ScenarioConfig polygenic_defaults() {
  ScenarioConfig cfg;
  cfg.K = 150;
  cfg.n_causal = 3;
  cfg.missing_frac = 0.5;
  cfg.h_u2 = 0.3;
  cfg.g_u2 = 0.0;
  cfg.pleiotropy = DirectionalPleiotropy{};
  return cfg;
}

inline ScenarioData scenario_polygenic(const GenotypePanel& panel, ScenarioConfig cfg, Rng& rng) {
  if (!cfg.pleiotropy) cfg.pleiotropy = DirectionalPleiotropy{};
  cfg.g_u2 = 0.0;
  return simulate_scenario(panel, cfg, rng);
}

/// Fully observed genes, one causal, confounded by a genotype-independent u.
inline ScenarioConfig confounded_defaults(double g_u2 = 0.3, double h_u2 = 0.3) {
  ScenarioConfig cfg;
  cfg.K = 100;
  cfg.n_causal = 1;
  cfg.missing_frac = 0.0;
  cfg.g_u2 = g_u2;
  cfg.h_u2 = h_u2;
  return cfg;
}

inline ScenarioData scenario_confounded(const GenotypePanel& panel, ScenarioConfig cfg, Rng& rng) {
  cfg.pleiotropy.reset();
  cfg.missing_frac = 0.0;
  return simulate_scenario(panel, cfg, rng);
}

}  // namespace cammel
