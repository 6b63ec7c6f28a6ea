#pragma once

// Univariate summary statistics per SNP and the combined multi-trait
// z-score matrix (GWAS in column 0, eQTL genes after it).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cammel/linalg.hpp"

namespace cammel {

/// Standard errors are floored here so noiseless fits stay finite.
inline constexpr double kSeFloor = 1e-12;

struct SummaryVector {
  Vec effect;  // theta_hat_j, per sd of genotype
  Vec se;      // sigma_hat_j
  Vec z;       // effect / se
  Index n_samples = 0;
  std::string trait_id;
  std::vector<std::string> snp_ids;

  Index p() const { return z.size(); }

  /// Diagonal of the RSS scaling matrix, S_jj = se_j^2 + effect_j^2 / n.
  Vec s_diagonal() const {
    return se.array().square() + effect.array().square() / static_cast<double>(n_samples);
  }

  /// Build from z-scores alone (se = 1, effect = z), used when only z is known.
  static SummaryVector from_z(Vec z, std::string trait_id, Index n_samples,
                              std::vector<std::string> snp_ids = {}) {
    SummaryVector s;
    s.effect = z;
    s.se = Vec::Ones(z.size());
    s.z = std::move(z);
    s.n_samples = n_samples;
    s.trait_id = std::move(trait_id);
    s.snp_ids = std::move(snp_ids);
    return s;
  }
};

struct UnivariateFit {
  double effect = 0.0;
  double se = 0.0;
};

/// theta = x^T y / x^T x and se^2 = RSS / (n x^T x).
inline UnivariateFit univariate_stats(const Vec& x, const Vec& y, Index n) {
  if (x.size() != y.size() || x.size() != n) {
    throw Error("sumstats", "ShapeMismatch", "x, y and n disagree");
  }
  if (n < 3) throw Error("sumstats", "TooFewSamples", "need n >= 3");
  const double xx = x.squaredNorm();
  if (!(xx > 0.0)) throw Error("sumstats", "DegenerateRegression", "x^T x = 0");
  const double effect = x.dot(y) / xx;
  const double rss = (y - x * effect).squaredNorm();
  const double se = std::sqrt(std::max(rss, 0.0) / (static_cast<double>(n) * xx));
  return {effect, std::max(se, kSeFloor)};
}

/// Column-wise univariate regression of y on every SNP of the panel. Uses the
/// fact that standardized columns satisfy x^T x = n.
inline SummaryVector summarize_trait(const GenotypePanel& panel, const Vec& y,
                                     std::string trait_id) {
  const Index n = panel.n(), p = panel.p();
  if (y.size() != n) throw Error("sumstats", "ShapeMismatch", "y length != panel n");
  if (n < 3) throw Error("sumstats", "TooFewSamples", "need n >= 3");
  const double yy = y.squaredNorm();
  if (!(yy > 0.0) || !y.allFinite()) {
    throw Error("sumstats", "DegenerateRegression", "outcome " + trait_id + " has zero variance");
  }
  SummaryVector out;
  out.effect.resize(p);
  out.se.resize(p);
  out.z.resize(p);
  const Vec xty = panel.values.transpose() * y;
  const double nd = static_cast<double>(n);
  for (Index j = 0; j < p; ++j) {
    const double xx = panel.values.col(j).squaredNorm();
    if (!(xx > 0.0)) {
      throw Error("sumstats", "DegenerateRegression", "SNP " + std::to_string(j) + " has x^T x = 0");
    }
    const double effect = xty(j) / xx;
    // RSS = y^T y - 2 b x^T y + b^2 x^T x = y^T y - b x^T y
    const double rss = std::max(yy - effect * xty(j), 0.0);
    const double se = std::max(std::sqrt(rss / (nd * xx)), kSeFloor);
    out.effect(j) = effect;
    out.se(j) = se;
    out.z(j) = effect / se;
  }
  out.n_samples = n;
  out.trait_id = std::move(trait_id);
  out.snp_ids = panel.snp_ids;
  return out;
}

struct CombinedZ {
  SummaryVector gwas;
  std::vector<SummaryVector> eqtl;

  Index p() const { return gwas.p(); }
  Index num_genes() const { return static_cast<Index>(eqtl.size()); }

  /// p x (K+1) z-score matrix, GWAS first.
  Mat matrix() const {
    Mat out(p(), num_genes() + 1);
    out.col(0) = gwas.z;
    for (Index k = 0; k < num_genes(); ++k) out.col(k + 1) = eqtl[static_cast<std::size_t>(k)].z;
    return out;
  }

  std::vector<std::string> trait_ids() const {
    std::vector<std::string> ids{gwas.trait_id};
    for (const auto& e : eqtl) ids.push_back(e.trait_id);
    return ids;
  }
};

inline CombinedZ combine(SummaryVector gwas, std::vector<SummaryVector> eqtls) {
  for (const auto& e : eqtls) {
    if (e.p() != gwas.p()) {
      throw Error("sumstats", "ShapeMismatch",
                  e.trait_id + " has " + std::to_string(e.p()) + " SNPs, GWAS has " +
                      std::to_string(gwas.p()));
    }
    if (!gwas.snp_ids.empty() && !e.snp_ids.empty() && e.snp_ids != gwas.snp_ids) {
      throw Error("sumstats", "OrderMismatch", e.trait_id + " SNP order differs from GWAS");
    }
  }
  return CombinedZ{std::move(gwas), std::move(eqtls)};
}

}  // namespace cammel
