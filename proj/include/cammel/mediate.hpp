#pragma once

// Mediation fits. The GWAS z-scores are regressed on the eQTL z-scores (and
// on unmediated covariates where the method has them) in the eigen space of
// the LD panel, with spike-slab priors on every coefficient.

#include <algorithm>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "cammel/factorize.hpp"
#include "cammel/linalg.hpp"
#include "cammel/ssvi.hpp"
#include "cammel/sumstats.hpp"

namespace cammel {

enum class MediationMethod { naive, fact, proj };

inline std::string to_string(MediationMethod m) {
  switch (m) {
    case MediationMethod::naive: return "naive";
    case MediationMethod::fact: return "fact";
    case MediationMethod::proj: return "proj";
  }
  return "?";
}

struct GeneEffect {
  std::string gene_id;
  double beta_mean = 0.0;  // pip * slab mean
  double beta_pip = 0.0;
  int beta_sign = 0;
};

struct CovariateEffect {
  std::string covariate_id;
  double mean = 0.0;
  double pip = 0.0;
};

struct MediationDiagnostics {
  double elbo = 0.0;
  int iterations = 0;
  double residual_var = 1.0;
  double runtime_seconds = 0.0;
  Index num_covariates = 0;
  Index num_factors = 0;
  std::vector<RejectedFactor> rejected;
};

struct MediationResult {
  MediationMethod method = MediationMethod::naive;
  std::vector<GeneEffect> genes;  // input order
  std::vector<CovariateEffect> covariates;
  MediationDiagnostics diagnostics;
  std::vector<std::string> predictor_ids;  // genes, then covariates
  SpikeSlabPosterior posterior;
  std::optional<FactorModel> factors;      // fact and proj only
  UnmediatedCovariates unmediated;

  /// Genes ranked by pip, then |beta_mean|, then id.
  std::vector<GeneEffect> ranked() const {
    auto out = genes;
    std::stable_sort(out.begin(), out.end(), [](const GeneEffect& a, const GeneEffect& b) {
      if (a.beta_pip != b.beta_pip) return a.beta_pip > b.beta_pip;
      if (std::abs(a.beta_mean) != std::abs(b.beta_mean)) return std::abs(a.beta_mean) > std::abs(b.beta_mean);
      return a.gene_id < b.gene_id;
    });
    return out;
  }
};

struct MediationOptions {
  SviOptions svi;
  FactorOptions factor;
  Index max_factors = 10;
  double pip_threshold = 0.5;
  Whitening whitening = Whitening::full;
  double gene_slab_var = 1.0;
  double covariate_slab_var = 1.0;
  bool learn_priors = false;
  // projected variant: a factor is treated as a confounder when its GWAS
  // loading is active and at least this share of eQTL loadings is active
  double dense_fraction = 0.5;
  double max_cross_corr = 0.0;  // null-block independence check, 0 disables
};

namespace mediate_detail {

inline void check_inputs(const CombinedZ& combined, const EigenLD& eig) {
  if (combined.p() != eig.p()) throw Error("mediate", "ShapeMismatch", "combined p != panel p");
  if (combined.num_genes() < 1) throw Error("mediate", "ShapeMismatch", "no eQTL genes");
  if (eig.rank() < 1) throw Error("mediate", "RankDeficient", "panel rank < 1");
}

inline MediationResult collect(MediationMethod method, const EigenRegressionProblem& prob,
                               const SpikeSlabPosterior& post, Index K) {
  MediationResult out;
  out.method = method;
  const Vec effect = post.effect();
  for (Index j = 0; j < prob.num_predictors(); ++j) {
    const auto& id = prob.predictor_ids[static_cast<std::size_t>(j)];
    if (j < K) {
      const double b = effect(j);
      out.genes.push_back({id, b, post.pip(j), (b > 0) - (b < 0)});
    } else {
      out.covariates.push_back({id, effect(j), post.pip(j)});
    }
  }
  out.diagnostics.elbo = post.elbo_trace.empty() ? 0.0 : post.elbo_trace.back();
  out.diagnostics.iterations = post.iterations;
  out.diagnostics.residual_var = post.residual_var;
  out.diagnostics.num_covariates = prob.num_predictors() - K;
  out.predictor_ids = prob.predictor_ids;
  out.posterior = post;
  return out;
}

inline SpikeSlabPrior group_prior(Index q, double slab_var, bool learn) {
  auto pr = SpikeSlabPrior::expect_one_of(q, slab_var);
  pr.learn_inclusion = learn;
  pr.learn_slab_var = learn;
  return pr;
}

inline Rng child(Rng& rng) { return Rng(splitmix64(rng())); }

inline std::vector<std::string> numbered(const std::string& stem, Index count) {
  std::vector<std::string> ids;
  for (Index i = 0; i < count; ++i) ids.push_back(stem + std::to_string(i));
  return ids;
}

inline MediationResult fit_with_covariates(MediationMethod method, const EigenLD& eig,
                                           const SummaryVector& target, const CombinedZ& combined,
                                           const Mat& z_cov, const std::string& cov_stem,
                                           const MediationOptions& opts, Rng& rng) {
  const Index K = combined.num_genes();
  auto prob = build_problem(eig, target, combined.eqtl, opts.whitening);
  std::vector<SpikeSlabPrior> priors{group_prior(K, opts.gene_slab_var, opts.learn_priors)};
  if (z_cov.cols() > 0) {
    const Mat cols = opts.whitening == Whitening::full ? rotate_to_eigen(eig, z_cov)
                                                       : Mat(eig.V.transpose() * z_cov);
    prob.append(cols, 1, numbered(cov_stem, z_cov.cols()));
    priors.push_back(group_prior(z_cov.cols(), opts.covariate_slab_var, opts.learn_priors));
  }
  Rng svi_rng = child(rng);
  const auto post = fit(prob, priors, opts.svi, svi_rng);
  return collect(method, prob, post, K);
}

}  // namespace mediate_detail

/// Unmediated effects modelled as one free coefficient per eigen direction:
/// in z space the block is V D, so in whitened coordinates it is the
/// identity scaled back by D (gamma on the per-sample scale sqrt(n) gamma).
inline MediationResult cammel_naive(const CombinedZ& combined, const EigenLD& eig,
                                    const MediationOptions& opts, Rng& rng) {
  mediate_detail::check_inputs(combined, eig);
  const auto t0 = std::chrono::steady_clock::now();
  // z = V D gamma' for gamma' in the eigen basis
  const Mat z_cov = eig.V * eig.D.asDiagonal();
  auto out = mediate_detail::fit_with_covariates(MediationMethod::naive, eig, combined.gwas, combined,
                                                 z_cov, "gamma", opts, rng);
  out.diagnostics.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline MediationResult cammel_fact(const CombinedZ& combined, const EigenLD& eig,
                                   const MediationOptions& opts, Rng& rng) {
  mediate_detail::check_inputs(combined, eig);
  const auto t0 = std::chrono::steady_clock::now();
  Rng frng = mediate_detail::child(rng);
  const FactorModel model = factorize_z(combined, eig, opts.max_factors, opts.factor, frng);
  const UnmediatedCovariates cov = select_unmediated(model, opts.pip_threshold);
  auto out = mediate_detail::fit_with_covariates(MediationMethod::fact, eig, combined.gwas, combined,
                                                 cov.z_unmed, "factor", opts, rng);
  out.diagnostics.num_factors = model.L();
  out.diagnostics.rejected = cov.rejected;
  out.factors = model;
  out.unmediated = cov;
  out.diagnostics.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Confounder factors learned on the null block. A factor is kept as a
/// confounder when it loads on the GWAS and densely on the eQTLs.
inline UnmediatedCovariates select_confounders(const FactorModel& model, double pip_threshold,
                                               double dense_fraction) {
  UnmediatedCovariates out;
  const Index T = model.omega_pip.rows();
  for (Index l = 0; l < model.L(); ++l) {
    const bool gwas_on = model.omega_pip(0, l) > pip_threshold;
    Index active = 0;
    for (Index t = 1; t < T; ++t) active += model.omega_pip(t, l) > pip_threshold;
    const double share = T > 1 ? static_cast<double>(active) / static_cast<double>(T - 1) : 0.0;
    if (!gwas_on) {
      out.rejected.push_back({l, "no GWAS loading"});
    } else if (share < dense_fraction) {
      out.rejected.push_back({l, "sparse eQTL loading"});
    } else {
      out.selected.push_back(l);
    }
  }
  const auto Ls = static_cast<Index>(out.selected.size());
  out.z_unmed.resize(model.Z_factor.rows(), Ls);
  out.gwas_loading.resize(Ls);
  for (Index i = 0; i < Ls; ++i) {
    const Index l = out.selected[static_cast<std::size_t>(i)];
    out.z_unmed.col(i) = model.Z_factor.col(l);
    out.gwas_loading(i) = model.Omega(0, l);
  }
  return out;
}

inline UnmediatedCovariates factorize_projected(const CombinedZ& projected, const EigenLD& null_eig,
                                                const EigenLD& analysis_eig,
                                                const MediationOptions& opts, Rng& rng) {
  const FactorModel model =
      factorize_projected_model(projected, null_eig, analysis_eig, opts.max_factors, opts.factor, rng);
  return select_confounders(model, opts.pip_threshold, opts.dense_fraction);
}

/// Confounders estimated on an independent null block are subtracted from
/// the GWAS and eQTL z-scores before the genes-only regression.
inline MediationResult cammel_proj(const CombinedZ& combined, const EigenLD& eig,
                                   const GenotypePanel& null_panel, const MediationOptions& opts,
                                   Rng& rng) {
  mediate_detail::check_inputs(combined, eig);
  const auto t0 = std::chrono::steady_clock::now();
  const CombinedZ projected = project_to_null_block(combined, eig, null_panel, opts.max_cross_corr);
  const EigenLD null_eig = svd_panel(null_panel);
  Rng frng = mediate_detail::child(rng);
  const FactorModel model =
      factorize_projected_model(projected, null_eig, eig, opts.max_factors, opts.factor, frng);
  const UnmediatedCovariates cov = select_confounders(model, opts.pip_threshold, opts.dense_fraction);

  CombinedZ adjusted = combined;
  if (cov.L() > 0) {
    // each trait column loses its share of the confounder factors
    const Mat pieces = cov.z_unmed;
    for (Index t = 0; t <= combined.num_genes(); ++t) {
      Vec load(cov.L());
      for (Index i = 0; i < cov.L(); ++i) load(i) = model.Omega(t, cov.selected[static_cast<std::size_t>(i)]);
      SummaryVector& s = t == 0 ? adjusted.gwas : adjusted.eqtl[static_cast<std::size_t>(t - 1)];
      s.z -= pieces * load;
    }
  }
  auto out = mediate_detail::fit_with_covariates(MediationMethod::proj, eig, adjusted.gwas, adjusted,
                                                 Mat(eig.p(), 0), "factor", opts, rng);
  out.diagnostics.num_factors = model.L();
  out.diagnostics.num_covariates = cov.L();
  out.diagnostics.rejected = cov.rejected;
  out.factors = model;
  out.unmediated = cov;
  out.diagnostics.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace cammel
