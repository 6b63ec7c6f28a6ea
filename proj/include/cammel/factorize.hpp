#pragma once

// Sparse factorization of the combined z-score matrix,
//   E[Z] = n^{-1/2} X^T C Omega^T,
// fit in the whitened eigen space where it reads H = D^{-1} V^T Z = F Omega^T + E
// with C = U F, E ~ N(0, I). Factors F get a Gaussian prior; loadings Omega
// get a spike-slab prior so every trait/factor pair has an inclusion
// probability. Inference is coordinate-ascent variational Bayes.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cammel/linalg.hpp"
#include "cammel/rng.hpp"
#include "cammel/ssvi.hpp"
#include "cammel/sumstats.hpp"

namespace cammel {

struct FactorOptions {
  int max_iterations = 300;
  double tolerance = 1e-7;        // relative ELBO change
  double prune_threshold = 1e-4;  // fraction of total variance
  double slab_var = 1.0;
  double noise_var = 1.0;
  bool learn_inclusion = true;
  double jitter = 0.01;
};

struct FactorModel {
  Mat C;          // n x L individual-space factors
  Mat F;          // r x L factor scores in the basis the model was fit in
  Mat Omega;      // (K+1) x L posterior mean loadings
  Mat omega_pip;  // (K+1) x L
  Mat Z_factor;   // p x L, n^{-1/2} X^T c_l on the analysis panel
  Vec explained;  // share of total variance per factor, descending
  std::vector<std::string> trait_ids;
  double elbo = 0.0;
  int iterations = 0;

  Index L() const { return Omega.cols(); }
};

struct RejectedFactor {
  Index factor = 0;
  std::string reason;
};

struct UnmediatedCovariates {
  Mat z_unmed;                      // p x L'
  std::vector<Index> selected;      // factor indices into the model
  std::vector<RejectedFactor> rejected;
  Vec gwas_loading;                 // L', Omega(0, l) of each selected factor

  Index L() const { return z_unmed.cols(); }
};

struct BilinearFit {
  Mat F;       // rows x L
  Mat W_mean;  // T x L, pip * mu
  Mat W_pip;
  Vec explained;
  double elbo = 0.0;
  int iterations = 0;
};

namespace factor_detail {

inline double spike_slab_kl(double pip, double mu, double v, double pi0, double s2) {
  const double eps = 1e-300;
  double kl = pip * std::log(std::max(pip, eps) / pi0) +
              (1 - pip) * std::log(std::max(1 - pip, eps) / (1 - pi0));
  kl += pip * 0.5 * (std::log(s2 / v) + (v + mu * mu) / s2 - 1.0);
  return kl;
}

}  // namespace factor_detail

/// Variational fit of H (rows x T) ~ F W^T + N(0, noise_var).
inline BilinearFit fit_bilinear(const Mat& H, Index L_max, const FactorOptions& opts, Rng& rng) {
  if (L_max < 1) throw Error("factorize", "InvalidOptions", "L_max >= 1", ErrorKind::usage);
  const Index R = H.rows(), T = H.cols();
  const Index L = std::min<Index>(L_max, std::min(R, T));
  const double tau = 1.0 / opts.noise_var;
  const double s2 = opts.slab_var;
  const double total = H.squaredNorm();

  BilinearFit out;
  if (!(total > 0.0) || L < 1) {
    out.F = Mat::Zero(R, 0);
    out.W_mean = Mat::Zero(T, 0);
    out.W_pip = Mat::Zero(T, 0);
    out.explained = Vec::Zero(0);
    return out;
  }
  if (!H.allFinite()) throw Error("factorize", "Diverged", "non-finite input", ErrorKind::numerical);

  // start from the leading singular pairs, slightly perturbed
  Eigen::BDCSVD<Mat> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec sroot = svd.singularValues().head(L).cwiseSqrt();
  Mat F = svd.matrixU().leftCols(L) * sroot.asDiagonal();
  Mat mu = svd.matrixV().leftCols(L) * sroot.asDiagonal();
  F += opts.jitter * randn(R, L, rng);
  mu += opts.jitter * randn(T, L, rng);
  Mat pip = Mat::Constant(T, L, 0.5);
  Mat var = Mat::Constant(T, L, s2);
  Vec pi0 = Vec::Constant(L, std::max(1.0 / static_cast<double>(T), 0.5));
  const double pi_floor = 1.0 / static_cast<double>(T + 1);

  Mat SigmaF = Mat::Identity(L, L);
  double prev_elbo = -std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    // q(F): shared row covariance
    Mat Wm = pip.cwiseProduct(mu);
    Mat EWW = Wm.transpose() * Wm;
    for (Index l = 0; l < L; ++l) {
      EWW(l, l) = (pip.col(l).array() * (mu.col(l).array().square() + var.col(l).array())).sum();
    }
    Mat Lambda = Mat::Identity(L, L) + tau * EWW;
    Eigen::LLT<Mat> llt(Lambda);
    if (llt.info() != Eigen::Success) {
      throw Error("factorize", "Diverged", "factor precision not positive definite",
                  ErrorKind::numerical);
    }
    SigmaF = llt.solve(Mat::Identity(L, L));
    F = tau * H * Wm * SigmaF;

    // q(W): spike-slab per entry, sequential over factors
    const Mat A = F.transpose() * F + static_cast<double>(R) * SigmaF;
    const Mat HF = H.transpose() * F;  // T x L
    for (Index t = 0; t < T; ++t) {
      for (Index l = 0; l < L; ++l) {
        double rc = HF(t, l);
        for (Index k = 0; k < L; ++k)
          if (k != l) rc -= pip(t, k) * mu(t, k) * A(k, l);
        rc *= tau;
        const double prec = tau * A(l, l) + 1.0 / s2;
        const double m = rc / prec, v = 1.0 / prec;
        const double lo = logit(pi0(l)) + 0.5 * std::log(v / s2) + 0.5 * m * m / v;
        mu(t, l) = m;
        var(t, l) = v;
        pip(t, l) = sigmoid(std::clamp(lo, -700.0, 700.0));
      }
    }
    if (opts.learn_inclusion) {
      for (Index l = 0; l < L; ++l) pi0(l) = std::clamp(pip.col(l).mean(), pi_floor, 1.0 - pi_floor);
    }

    // ELBO
    Wm = pip.cwiseProduct(mu);
    double sq = total - 2.0 * (H.transpose() * F).cwiseProduct(Wm).sum();
    for (Index t = 0; t < T; ++t) {
      const Vec w = Wm.row(t).transpose();
      double quad = w.dot(A * w);
      for (Index l = 0; l < L; ++l) {
        const double vtl = pip(t, l) * (mu(t, l) * mu(t, l) + var(t, l)) - Wm(t, l) * Wm(t, l);
        quad += vtl * A(l, l);
      }
      sq += quad;
    }
    double elbo = -0.5 * tau * sq;
    const double logdet = 2.0 * Eigen::LLT<Mat>(SigmaF).matrixL().toDenseMatrix().diagonal().array().log().sum();
    elbo -= 0.5 * (F.squaredNorm() + static_cast<double>(R) * (SigmaF.trace() - static_cast<double>(L) - logdet));
    for (Index t = 0; t < T; ++t)
      for (Index l = 0; l < L; ++l)
        elbo -= factor_detail::spike_slab_kl(pip(t, l), mu(t, l), var(t, l), pi0(l), s2);
    if (!std::isfinite(elbo)) {
      throw Error("factorize", "Diverged", "ELBO non-finite at iteration " + std::to_string(it),
                  ErrorKind::numerical);
    }
    out.elbo = elbo;
    if (std::abs(elbo - prev_elbo) < opts.tolerance * std::abs(elbo)) {
      ++it;
      break;
    }
    prev_elbo = elbo;
  }
  out.iterations = it;

  // order by explained variance and prune negligible factors
  const Mat Wm = pip.cwiseProduct(mu);
  std::vector<std::pair<double, Index>> share;
  for (Index l = 0; l < L; ++l) {
    const double ev = (F.col(l) * Wm.col(l).transpose()).squaredNorm() / total;
    share.emplace_back(ev, l);
  }
  std::stable_sort(share.begin(), share.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Index> keep;
  for (const auto& [ev, l] : share)
    if (ev >= opts.prune_threshold) keep.push_back(l);
  const auto Lk = static_cast<Index>(keep.size());
  out.F.resize(R, Lk);
  out.W_mean.resize(T, Lk);
  out.W_pip.resize(T, Lk);
  out.explained.resize(Lk);
  for (Index i = 0; i < Lk; ++i) {
    const Index l = keep[static_cast<std::size_t>(i)];
    out.F.col(i) = F.col(l);
    out.W_mean.col(i) = Wm.col(l);
    out.W_pip.col(i) = pip.col(l);
    out.explained(i) = share[static_cast<std::size_t>(i)].first;
  }
  return out;
}

/// Factorize the combined matrix on the analysis panel. C = U F, and
/// n^{-1/2} X^T C = V D F.
inline FactorModel factorize_z(const CombinedZ& combined, const EigenLD& eig, Index L_max,
                               const FactorOptions& opts, Rng& rng) {
  if (eig.rank() < 1) throw Error("factorize", "RankDeficient", "panel rank < 1");
  if (combined.p() != eig.p()) throw Error("factorize", "ShapeMismatch", "combined p != panel p");
  const Mat H = rotate_to_eigen(eig, combined.matrix());
  const BilinearFit fit = fit_bilinear(H, L_max, opts, rng);
  FactorModel model;
  model.F = fit.F;
  model.C = eig.U * fit.F;
  model.Omega = fit.W_mean;
  model.omega_pip = fit.W_pip;
  model.Z_factor = rotate_from_eigen(eig, fit.F);
  model.explained = fit.explained;
  model.trait_ids = combined.trait_ids();
  model.elbo = fit.elbo;
  model.iterations = fit.iterations;
  return model;
}

/// Keep factor l unless its GWAS loading and at least one eQTL loading are
/// both active (pip > threshold): shared factors may carry mediation.
inline UnmediatedCovariates select_unmediated(const FactorModel& model, double pip_threshold = 0.5) {
  if (!(pip_threshold > 0.0 && pip_threshold < 1.0)) {
    throw Error("factorize", "InvalidThreshold", "pip_threshold in (0,1)", ErrorKind::usage);
  }
  UnmediatedCovariates out;
  for (Index l = 0; l < model.L(); ++l) {
    const bool gwas_on = model.omega_pip(0, l) > pip_threshold;
    bool eqtl_on = false;
    for (Index t = 1; t < model.omega_pip.rows(); ++t) eqtl_on |= model.omega_pip(t, l) > pip_threshold;
    if (gwas_on && eqtl_on) {
      out.rejected.push_back({l, "shared by GWAS and eQTL"});
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

/// Z0 = X0^T (X^T)^+ Z: carries the combined matrix onto an LD block that is
/// independent of the analysis block. Genetic mean components vanish in
/// expectation; components shared through individuals (confounders) remain,
/// with mean n^{-1/2} X0^T u.
inline CombinedZ project_to_null_block(const CombinedZ& combined, const EigenLD& eig,
                                       const GenotypePanel& null_panel,
                                       double max_cross_corr = 0.0) {
  if (combined.p() != eig.p()) throw Error("factorize", "ShapeMismatch", "combined p != panel p");
  if (null_panel.n() != eig.n_ref) {
    throw Error("factorize", "ShapeMismatch", "null panel must share the reference individuals");
  }
  if (!combined.gwas.snp_ids.empty() && !null_panel.snp_ids.empty()) {
    std::vector<std::string> a = combined.gwas.snp_ids, b = null_panel.snp_ids;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::string> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty()) {
      throw Error("factorize", "BlockOverlap", "null block shares SNP " + both.front());
    }
  }
  if (max_cross_corr > 0.0) {
    // X0^T X / n = n^{-1/2} X0^T U D V^T
    const Mat cross = panel_scale(eig.n_ref) * ((null_panel.values.transpose() * eig.U) *
                                                eig.D.asDiagonal() * eig.V.transpose());
    const double worst = cross.cwiseAbs().maxCoeff();
    if (worst > max_cross_corr) {
      throw Error("factorize", "BlockOverlap",
                  "null block correlates with analysis block (max |r| = " + std::to_string(worst) + ")");
    }
  }
  const Mat Z0 = null_panel.values.transpose() * apply_pseudo_inverse_transpose(eig, combined.matrix());
  SummaryVector gwas = SummaryVector::from_z(Z0.col(0), combined.gwas.trait_id,
                                             combined.gwas.n_samples, null_panel.snp_ids);
  std::vector<SummaryVector> eqtl;
  for (Index k = 0; k < combined.num_genes(); ++k) {
    const auto& src = combined.eqtl[static_cast<std::size_t>(k)];
    eqtl.push_back(SummaryVector::from_z(Z0.col(k + 1), src.trait_id, src.n_samples, null_panel.snp_ids));
  }
  return CombinedZ{std::move(gwas), std::move(eqtl)};
}

/// Factorize the projected matrix on the null block: C = U0 F0, and the
/// covariates on the analysis panel are n^{-1/2} X^T C = V D U^T U0 F0.
inline FactorModel factorize_projected_model(const CombinedZ& projected, const EigenLD& null_eig,
                                             const EigenLD& analysis_eig, Index L_max,
                                             const FactorOptions& opts, Rng& rng) {
  if (null_eig.rank() < 1 || analysis_eig.rank() < 1) {
    throw Error("factorize", "RankDeficient", "panel rank < 1");
  }
  if (projected.p() != null_eig.p()) throw Error("factorize", "ShapeMismatch", "projected p != null p");
  if (null_eig.n_ref != analysis_eig.n_ref) {
    throw Error("factorize", "ShapeMismatch", "panels must share the reference individuals");
  }
  const Mat H0 = rotate_to_eigen(null_eig, projected.matrix());
  const BilinearFit fit = fit_bilinear(H0, L_max, opts, rng);
  FactorModel model;
  model.F = fit.F;
  model.C = null_eig.U * fit.F;
  model.Omega = fit.W_mean;
  model.omega_pip = fit.W_pip;
  model.Z_factor = rotate_from_eigen(analysis_eig, analysis_eig.U.transpose() * model.C);
  model.explained = fit.explained;
  model.trait_ids = projected.trait_ids();
  model.elbo = fit.elbo;
  model.iterations = fit.iterations;
  return model;
}

}  // namespace cammel
