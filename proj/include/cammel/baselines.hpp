#pragma once

// Reference gene-level statistics. All take whitened eigen-space vectors
// eta = D^{-1} V^T z (see rotate_to_eigen) except otwas, which works on
// observed individual-level data.

#include <algorithm>
#include <cmath>
#include <string>

#include "cammel/linalg.hpp"

namespace cammel {

enum class BaselineMethod { stwas, ivw, egger, otwas };

inline std::string to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::stwas: return "stwas";
    case BaselineMethod::ivw: return "ivw";
    case BaselineMethod::egger: return "egger";
    case BaselineMethod::otwas: return "otwas";
  }
  return "?";
}

struct BaselineScore {
  std::string gene_id;
  double statistic = 0.0;
  int sign = 1;
  BaselineMethod method = BaselineMethod::stwas;
};

namespace baseline_detail {

inline int sign_of(double v) { return v < 0 ? -1 : 1; }

inline void check_pair(const Vec& eta_e, const Vec& eta_g) {
  if (eta_e.size() != eta_g.size()) throw Error("baselines", "ShapeMismatch", "eta lengths differ");
  if (!(eta_e.squaredNorm() > 0.0)) throw Error("baselines", "ZeroInstrument", "eQTL vector is zero");
}

inline BaselineScore finish(double stat, BaselineMethod m, std::string id) {
  if (!std::isfinite(stat)) throw Error("baselines", "NonFinite", "statistic is not finite", ErrorKind::numerical);
  return {std::move(id), stat, sign_of(stat), m};
}

}  // namespace baseline_detail

inline BaselineScore stwas(const Vec& eta_eqtl, const Vec& eta_gwas, std::string gene_id = {}) {
  baseline_detail::check_pair(eta_eqtl, eta_gwas);
  const double stat = eta_eqtl.dot(eta_gwas) / eta_eqtl.norm();
  return baseline_detail::finish(stat, BaselineMethod::stwas, std::move(gene_id));
}

/// Residual sd floor so an exact fit gives a large finite statistic.
inline constexpr double kSigmaFloor = 1e-12;

struct IvwFit {
  double beta = 0.0;
  double sigma = 0.0;  // MLE residual sd
  double se = 0.0;     // sigma / ||eta_e||
};

inline IvwFit ivw_fit(const Vec& eta_eqtl, const Vec& eta_gwas) {
  baseline_detail::check_pair(eta_eqtl, eta_gwas);
  const double ee = eta_eqtl.squaredNorm();
  IvwFit f;
  f.beta = eta_eqtl.dot(eta_gwas) / ee;
  f.sigma = std::sqrt((eta_gwas - f.beta * eta_eqtl).squaredNorm() / static_cast<double>(eta_eqtl.size()));
  f.se = f.sigma / std::sqrt(ee);
  return f;
}

/// T = beta * max(sigma, 1) / se, which equals beta ||eta_e|| max(sigma,1)/sigma.
/// With guard = false the factor is sigma itself (T = beta ||eta_e||).
inline BaselineScore ivw(const Vec& eta_eqtl, const Vec& eta_gwas, std::string gene_id = {},
                         bool guard = true) {
  const IvwFit f = ivw_fit(eta_eqtl, eta_gwas);
  const double sigma = std::max(f.sigma, kSigmaFloor);
  const double scale = guard ? std::max(sigma, 1.0) : sigma;
  const double stat = f.beta * scale / (sigma / eta_eqtl.norm());
  return baseline_detail::finish(stat, BaselineMethod::ivw, std::move(gene_id));
}

struct EggerFit {
  double intercept = 0.0;
  double beta = 0.0;
  double sigma = 0.0;
  double se = 0.0;
};

inline EggerFit egger_fit(const Vec& eta_eqtl, const Vec& eta_gwas) {
  baseline_detail::check_pair(eta_eqtl, eta_gwas);
  const Index r = eta_eqtl.size();
  if (r < 3) throw Error("baselines", "DegenerateDesign", "egger needs r >= 3");
  const double rd = static_cast<double>(r);
  const double me = eta_eqtl.mean(), mg = eta_gwas.mean();
  const Vec ce = eta_eqtl.array() - me;
  const double sxx = ce.squaredNorm();
  if (!(sxx > 1e-300)) throw Error("baselines", "DegenerateDesign", "eQTL vector is constant");
  EggerFit f;
  f.beta = ce.dot(eta_gwas.array().matrix() - Vec::Constant(r, mg)) / sxx;
  f.intercept = mg - f.beta * me;
  const Vec resid = eta_gwas.array() - f.intercept - f.beta * eta_eqtl.array();
  f.sigma = std::sqrt(resid.squaredNorm() / rd);
  f.se = f.sigma / std::sqrt(sxx);
  return f;
}

inline BaselineScore egger(const Vec& eta_eqtl, const Vec& eta_gwas, std::string gene_id = {}) {
  const EggerFit f = egger_fit(eta_eqtl, eta_gwas);
  const double sigma = std::max(f.sigma, kSigmaFloor);
  const double sxx = (eta_eqtl.array() - eta_eqtl.mean()).matrix().squaredNorm();
  const double stat = f.beta * std::max(sigma, 1.0) / (sigma / std::sqrt(sxx));
  return baseline_detail::finish(stat, BaselineMethod::egger, std::move(gene_id));
}

/// Pearson correlation on the t scale, corr sqrt((n-2)/(1-corr^2)).
inline BaselineScore otwas(const Vec& expression, const Vec& phenotype, std::string gene_id = {}) {
  if (expression.size() != phenotype.size()) throw Error("baselines", "ShapeMismatch", "m and y lengths differ");
  const Index n = expression.size();
  if (n < 3) throw Error("baselines", "ZeroVariance", "need n >= 3");
  const Vec cm = expression.array() - expression.mean();
  const Vec cy = phenotype.array() - phenotype.mean();
  const double sm = cm.norm(), sy = cy.norm();
  if (!(sm > 0.0) || !(sy > 0.0)) throw Error("baselines", "ZeroVariance", "constant input");
  double corr = cm.dot(cy) / (sm * sy);
  corr = std::clamp(corr, -1.0 + 1e-15, 1.0 - 1e-15);
  const double stat = corr * std::sqrt((static_cast<double>(n) - 2.0) / (1.0 - corr * corr));
  return baseline_detail::finish(stat, BaselineMethod::otwas, std::move(gene_id));
}

}  // namespace cammel
