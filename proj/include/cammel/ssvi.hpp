#pragma once

// Spike-slab linear regression in eigen space, fit by stochastic variational
// inference.
//
// Model:   y_i ~ N(eta_i, sigma^2 w_i),   eta = X theta,
//          theta_j = s_j b_j,  s_j ~ Bern(pi0_g),  b_j ~ N(0, slab_var_g),
// where g is the prior group of coefficient j. The variational family is
// mean-field Bernoulli x Gaussian per coefficient, q(s_j) = Bern(pip_j),
// q(b_j | s_j = 1) = N(mu_j, v_j), with a point estimate for sigma^2.
//
// The expected log-likelihood is estimated by Monte Carlo through the local
// reparameterization eta_i = m_i + sqrt(v_i) eps_i, where m and v are the
// mean and variance of the linear predictor under q. Noise is drawn in the
// r-dimensional eigen space, never per coefficient.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cammel/linalg.hpp"
#include "cammel/rng.hpp"
#include "cammel/sumstats.hpp"

namespace cammel {

inline double sigmoid(double a) {
  return a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}
inline double logit(double p) { return std::log(p) - std::log1p(-p); }

struct SpikeSlabPrior {
  double inclusion_logit = -2.0;
  double slab_var = 1.0;
  bool learn_inclusion = false;
  bool learn_slab_var = false;

  static SpikeSlabPrior expect_one_of(Index q, double slab_var = 1.0) {
    return SpikeSlabPrior{logit(1.0 / static_cast<double>(std::max<Index>(q, 2))), slab_var};
  }
  double inclusion() const { return sigmoid(inclusion_logit); }
};

struct SviOptions {
  int iterations = 2000;
  double step_size = 0.01;
  int mc_samples = 10;
  std::uint64_t seed = 0;
  bool learn_residual = true;
  double residual_var_init = 1.0;
  double convergence_tol = 1e-6;
  int convergence_window = 100;
};

enum class Whitening { full, d2_weighted };

struct EigenRegressionProblem {
  Vec y;                 // r
  Mat design;            // r x q
  Vec noise_scale;       // r, w_i (ones when fully whitened, d_i^2 otherwise)
  std::vector<int> group;
  std::vector<std::string> predictor_ids;
  Whitening whitening = Whitening::full;

  Index rank() const { return y.size(); }
  Index num_predictors() const { return design.cols(); }
  int num_groups() const {
    int g = 0;
    for (int x : group) g = std::max(g, x + 1);
    return std::max(g, 1);
  }

  /// Append predictor columns that share one prior group.
  void append(const Mat& cols, int grp, const std::vector<std::string>& ids) {
    if (cols.rows() != rank()) throw Error("ssvi", "ShapeMismatch", "column block rows != rank");
    Mat merged(rank(), design.cols() + cols.cols());
    merged << design, cols;
    design = std::move(merged);
    for (Index j = 0; j < cols.cols(); ++j) {
      group.push_back(grp);
      predictor_ids.push_back(j < static_cast<Index>(ids.size()) ? ids[static_cast<std::size_t>(j)]
                                                                 : "x" + std::to_string(group.size() - 1));
    }
  }
};

inline EigenRegressionProblem make_problem(Vec y, Vec noise_scale = {}) {
  EigenRegressionProblem prob;
  prob.noise_scale = noise_scale.size() == 0 ? Vec::Ones(y.size()) : std::move(noise_scale);
  prob.design.resize(y.size(), 0);
  prob.y = std::move(y);
  return prob;
}

/// Eigen-space regression of one z-score vector on others. The fully
/// whitened form uses y = D^{-1} V^T z with unit noise; the d2-weighted form
/// uses y = V^T z with noise variances d_i^2. Both give the same likelihood.
inline EigenRegressionProblem build_problem(const EigenLD& eig, const SummaryVector& target,
                                            const std::vector<SummaryVector>& predictors,
                                            Whitening whitening = Whitening::full) {
  if (target.p() != eig.p()) throw Error("ssvi", "ShapeMismatch", "target p != panel p");
  Mat Zp(eig.p(), static_cast<Index>(predictors.size()));
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < predictors.size(); ++k) {
    if (predictors[k].p() != eig.p()) {
      throw Error("ssvi", "ShapeMismatch", predictors[k].trait_id + " p != panel p");
    }
    Zp.col(static_cast<Index>(k)) = predictors[k].z;
    ids.push_back(predictors[k].trait_id);
  }
  EigenRegressionProblem prob;
  if (whitening == Whitening::full) {
    prob = make_problem(rotate_to_eigen(eig, target.z));
    prob.append(rotate_to_eigen(eig, Zp), 0, ids);
  } else {
    prob = make_problem(eig.V.transpose() * target.z, eig.d2());
    prob.append(eig.V.transpose() * Zp, 0, ids);
  }
  prob.whitening = whitening;
  return prob;
}

struct SpikeSlabPosterior {
  Vec pip;
  Vec mean;  // slab means
  Vec var;   // slab variances
  double residual_var = 1.0;
  std::vector<double> elbo_trace;
  std::vector<SpikeSlabPrior> priors;  // final hyperparameters
  int iterations = 0;

  /// Posterior mean of the coefficient, pip * slab mean.
  Vec effect() const { return pip.cwiseProduct(mean); }
};

/// Unconstrained variational parameters.
struct VariationalParams {
  Vec logit_pip;
  Vec mu;
  Vec log_var;
  double log_resid = 0.0;
  Vec prior_logit;     // per group
  Vec prior_log_slab;  // per group

  Index size() const { return mu.size(); }
};

struct VariationalGrad {
  Vec logit_pip, mu, log_var;
  double log_resid = 0.0;
  Vec prior_logit, prior_log_slab;
};

namespace ssvi_detail {

struct Moments {
  Vec pip, theta_mean, theta_var;
};

inline Moments moments(const VariationalParams& p) {
  Moments m;
  m.pip = p.logit_pip.unaryExpr([](double a) { return sigmoid(a); });
  const Vec v = p.log_var.array().exp();
  m.theta_mean = m.pip.cwiseProduct(p.mu);
  m.theta_var = m.pip.array() * (p.mu.array().square() + v.array()) -
                m.theta_mean.array().square();
  m.theta_var = m.theta_var.cwiseMax(0.0);
  return m;
}

inline void check_problem(const EigenRegressionProblem& prob) {
  if (prob.design.rows() != prob.y.size() || prob.noise_scale.size() != prob.y.size()) {
    throw Error("ssvi", "ShapeMismatch", "problem dimensions disagree");
  }
  if (static_cast<Index>(prob.group.size()) != prob.design.cols()) {
    throw Error("ssvi", "ShapeMismatch", "group labels != predictor count");
  }
  if (!prob.y.allFinite()) throw Error("ssvi", "IllConditioned", "outcome has non-finite entries");
  if (!(prob.noise_scale.array() > 0.0).all()) {
    throw Error("ssvi", "IllConditioned", "noise scales must be positive");
  }
  for (Index j = 0; j < prob.design.cols(); ++j) {
    if (!prob.design.col(j).allFinite()) {
      throw Error("ssvi", "IllConditioned",
                  "predictor column " + std::to_string(j) + " has non-finite entries",
                  ErrorKind::numerical);
    }
  }
}

}  // namespace ssvi_detail

/// Monte-Carlo estimate of E_q[ln p(y | theta, sigma^2)] with the given
/// standard normal draws (r x S), and its reparameterized gradient. The same
/// draws give a smooth function of the parameters, so central differences
/// with common random numbers check the gradient exactly.
inline double expected_loglik_mc(const EigenRegressionProblem& prob, const VariationalParams& par,
                                 const Mat& eps, VariationalGrad* grad = nullptr) {
  using ssvi_detail::moments;
  const auto mom = moments(par);
  const Mat& X = prob.design;
  const Vec m = X * mom.theta_mean;
  const Vec v = X.array().square().matrix() * mom.theta_var;
  const Vec sd = v.cwiseSqrt();
  const double s2 = std::exp(par.log_resid);
  const Vec inv_w = (s2 * prob.noise_scale).cwiseInverse();
  const Index r = prob.y.size();
  const Index S = eps.cols();
  const double norm = -0.5 * (r * std::log(2.0 * std::numbers::pi) +
                              (s2 * prob.noise_scale).array().log().sum());

  double sq_total = 0.0;
  Vec g_m = Vec::Zero(r), g_sd = Vec::Zero(r);
  for (Index s = 0; s < S; ++s) {
    const Vec resid = prob.y - (m + sd.cwiseProduct(eps.col(s)));
    const Vec wresid = resid.cwiseProduct(inv_w);
    sq_total += resid.dot(wresid);
    g_m += wresid;
    g_sd += wresid.cwiseProduct(eps.col(s));
  }
  const double inv_s = 1.0 / static_cast<double>(S);
  const double value = norm - 0.5 * sq_total * inv_s;
  if (!grad) return value;

  g_m *= inv_s;
  g_sd *= inv_s;
  // d/dv = d/dsd * 1/(2 sd); entries with sd = 0 carry no likelihood signal
  Vec g_v(r);
  for (Index i = 0; i < r; ++i) g_v(i) = sd(i) > 1e-150 ? g_sd(i) / (2.0 * sd(i)) : 0.0;

  const Vec gm_theta = X.transpose() * g_m;                       // dL/dtheta_mean
  const Vec gv_theta = X.array().square().matrix().transpose() * g_v;  // dL/dtheta_var
  const Vec& pip = mom.pip;
  const Vec var = par.log_var.array().exp();
  const Vec& mu = par.mu;

  grad->mu = gm_theta.cwiseProduct(pip) +
             gv_theta.cwiseProduct((2.0 * pip.array() * (1.0 - pip.array()) * mu.array()).matrix());
  grad->log_var = gv_theta.cwiseProduct(pip).cwiseProduct(var);
  const Vec dmean_dpip = mu;
  const Vec dvar_dpip = (mu.array().square() + var.array() - 2.0 * pip.array() * mu.array().square()).matrix();
  const Vec dpip_da = (pip.array() * (1.0 - pip.array())).matrix();
  grad->logit_pip = (gm_theta.cwiseProduct(dmean_dpip) + gv_theta.cwiseProduct(dvar_dpip))
                        .cwiseProduct(dpip_da);
  grad->log_resid = -0.5 * static_cast<double>(r) + 0.5 * sq_total * inv_s;
  return value;
}

/// Closed-form E_q[ln p(y | theta, sigma^2)]; the Monte-Carlo estimator above
/// is unbiased for it.
inline double expected_loglik_exact(const EigenRegressionProblem& prob, const VariationalParams& par) {
  const auto mom = ssvi_detail::moments(par);
  const Vec m = prob.design * mom.theta_mean;
  const Vec v = prob.design.array().square().matrix() * mom.theta_var;
  const Vec w = std::exp(par.log_resid) * prob.noise_scale;
  const Vec resid = prob.y - m;
  return -0.5 * (prob.y.size() * std::log(2.0 * std::numbers::pi) + w.array().log().sum() +
                 ((resid.array().square() + v.array()) / w.array()).sum());
}

/// KL(q || prior) summed over coefficients, with gradients.
inline double kl_divergence(const EigenRegressionProblem& prob, const VariationalParams& par,
                            VariationalGrad* grad = nullptr) {
  const Index q = par.size();
  double kl = 0.0;
  if (grad) {
    grad->logit_pip = Vec::Zero(q);
    grad->mu = Vec::Zero(q);
    grad->log_var = Vec::Zero(q);
    grad->prior_logit = Vec::Zero(par.prior_logit.size());
    grad->prior_log_slab = Vec::Zero(par.prior_log_slab.size());
  }
  for (Index j = 0; j < q; ++j) {
    const int g = prob.group[static_cast<std::size_t>(j)];
    const double a = par.logit_pip(j);
    const double pi = sigmoid(a);
    const double a0 = par.prior_logit(g);
    const double pi0 = sigmoid(a0);
    const double s2 = std::exp(par.prior_log_slab(g));
    const double v = std::exp(par.log_var(j));
    const double mu = par.mu(j);
    // Bernoulli part: pi ln(pi/pi0) + (1-pi) ln((1-pi)/(1-pi0))
    const double log_pi = -std::log1p(std::exp(-a)), log_1mpi = -std::log1p(std::exp(a));
    const double log_pi0 = -std::log1p(std::exp(-a0)), log_1mpi0 = -std::log1p(std::exp(a0));
    const double kl_bern = pi * (log_pi - log_pi0) + (1 - pi) * (log_1mpi - log_1mpi0);
    const double kl_gauss = 0.5 * (std::log(s2 / v) + (v + mu * mu) / s2 - 1.0);
    kl += kl_bern + pi * kl_gauss;
    if (grad) {
      const double dpi = pi * (1 - pi);
      // d kl_bern / d pi = (a - a0)
      grad->logit_pip(j) = ((a - a0) + kl_gauss) * dpi;
      grad->mu(j) = pi * mu / s2;
      grad->log_var(j) = pi * 0.5 * (v / s2 - 1.0);
      grad->prior_logit(g) += pi0 - pi;
      grad->prior_log_slab(g) += pi * 0.5 * (1.0 - (v + mu * mu) / s2);
    }
  }
  return kl;
}

namespace ssvi_detail {

struct Adam {
  explicit Adam(Index n, double lr) : m(Vec::Zero(n)), v(Vec::Zero(n)), lr(lr) {}
  Vec m, v;
  double lr;
  int t = 0;
  // ascent step on x given gradient g
  void step(Vec& x, const Vec& g) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
    x.array() += lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

inline Vec pack(const VariationalParams& p) {
  const Index q = p.size(), G = p.prior_logit.size();
  Vec x(3 * q + 1 + 2 * G);
  x << p.logit_pip, p.mu, p.log_var, p.log_resid, p.prior_logit, p.prior_log_slab;
  return x;
}

inline void unpack(const Vec& x, VariationalParams& p) {
  const Index q = p.size(), G = p.prior_logit.size();
  p.logit_pip = x.segment(0, q);
  p.mu = x.segment(q, q);
  p.log_var = x.segment(2 * q, q);
  p.log_resid = x(3 * q);
  p.prior_logit = x.segment(3 * q + 1, G);
  p.prior_log_slab = x.segment(3 * q + 1 + G, G);
}

}  // namespace ssvi_detail

/// Starting point: univariate posterior per coefficient, prior inclusion.
inline VariationalParams initial_params(const EigenRegressionProblem& prob,
                                        const std::vector<SpikeSlabPrior>& priors,
                                        double residual_var) {
  const Index q = prob.num_predictors();
  VariationalParams par;
  const int G = prob.num_groups();
  par.prior_logit.resize(G);
  par.prior_log_slab.resize(G);
  for (int g = 0; g < G; ++g) {
    const auto& pr = priors.at(static_cast<std::size_t>(g));
    par.prior_logit(g) = pr.inclusion_logit;
    par.prior_log_slab(g) = std::log(pr.slab_var);
  }
  par.logit_pip.resize(q);
  par.mu.resize(q);
  par.log_var.resize(q);
  const Vec inv_w = (residual_var * prob.noise_scale).cwiseInverse();
  for (Index j = 0; j < q; ++j) {
    const int g = prob.group[static_cast<std::size_t>(j)];
    const double s2 = std::exp(par.prior_log_slab(g));
    const double prec = prob.design.col(j).cwiseAbs2().dot(inv_w) + 1.0 / s2;
    par.mu(j) = prob.design.col(j).cwiseProduct(inv_w).dot(prob.y) / prec;
    par.log_var(j) = -std::log(prec);
    par.logit_pip(j) = par.prior_logit(g);
  }
  par.log_resid = std::log(residual_var);
  return par;
}

inline SpikeSlabPosterior fit(const EigenRegressionProblem& prob,
                              const std::vector<SpikeSlabPrior>& priors, const SviOptions& opts,
                              Rng& rng) {
  using namespace ssvi_detail;
  check_problem(prob);
  if (static_cast<int>(priors.size()) < prob.num_groups()) {
    throw Error("ssvi", "ShapeMismatch", "one prior per predictor group required", ErrorKind::usage);
  }
  if (opts.iterations < 1 || opts.mc_samples < 1 || !(opts.step_size > 0)) {
    throw Error("ssvi", "InvalidOptions", "iterations, mc_samples, step_size must be positive",
                ErrorKind::usage);
  }
  const Index q = prob.num_predictors(), r = prob.rank();
  const int G = prob.num_groups();

  VariationalParams par = initial_params(prob, priors, opts.residual_var_init);
  // identical columns get identical gradients forever; a small relative
  // jitter on the starting means lets the fit pick one of them
  {
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (Index j = 0; j < q; ++j) par.mu(j) *= 1.0 + jitter(rng);
  }
  Vec x = pack(par);
  Adam adam(x.size(), opts.step_size);

  // parameters frozen by the options get a zero gradient
  Vec mask = Vec::Ones(x.size());
  if (!opts.learn_residual) mask(3 * q) = 0.0;
  for (int g = 0; g < G; ++g) {
    if (!priors[static_cast<std::size_t>(g)].learn_inclusion) mask(3 * q + 1 + g) = 0.0;
    if (!priors[static_cast<std::size_t>(g)].learn_slab_var) mask(3 * q + 1 + G + g) = 0.0;
  }

  SpikeSlabPosterior post;
  post.elbo_trace.reserve(static_cast<std::size_t>(opts.iterations));
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat eps(r, opts.mc_samples);
  const int W = std::max(1, opts.convergence_window);
  int it = 0;
  for (; it < opts.iterations; ++it) {
    for (Index s = 0; s < eps.cols(); ++s)
      for (Index i = 0; i < r; ++i) eps(i, s) = nd(rng);
    VariationalGrad gl, gk;
    const double ll = expected_loglik_mc(prob, par, eps, &gl);
    const double kl = kl_divergence(prob, par, &gk);
    const double elbo = ll - kl;
    if (!std::isfinite(elbo)) {
      throw Error("ssvi", "Diverged", "ELBO became non-finite at iteration " + std::to_string(it),
                  ErrorKind::numerical);
    }
    post.elbo_trace.push_back(elbo);

    Vec g(x.size());
    g << gl.logit_pip - gk.logit_pip, gl.mu - gk.mu, gl.log_var - gk.log_var, gl.log_resid,
        -gk.prior_logit, -gk.prior_log_slab;
    g = g.cwiseProduct(mask);
    adam.step(x, g);
    // keep logits and log variances in a numerically safe range
    x.segment(0, q) = x.segment(0, q).cwiseMax(-30.0).cwiseMin(30.0);
    x.segment(2 * q, q) = x.segment(2 * q, q).cwiseMax(-40.0).cwiseMin(20.0);
    x(3 * q) = std::clamp(x(3 * q), -20.0, 10.0);
    x.segment(3 * q + 1, G) = x.segment(3 * q + 1, G).cwiseMax(-20.0).cwiseMin(20.0);
    unpack(x, par);

    const auto n = static_cast<int>(post.elbo_trace.size());
    if (n >= 2 * W && n % W == 0) {
      double recent = 0, before = 0;
      for (int i = n - W; i < n; ++i) recent += post.elbo_trace[static_cast<std::size_t>(i)];
      for (int i = n - 2 * W; i < n - W; ++i) before += post.elbo_trace[static_cast<std::size_t>(i)];
      recent /= W;
      before /= W;
      if (recent - before < opts.convergence_tol * std::abs(before)) {
        ++it;
        break;
      }
    }
  }

  const auto mom = moments(par);
  post.pip = mom.pip;
  post.mean = par.mu;
  post.var = par.log_var.array().exp();
  post.residual_var = std::exp(par.log_resid);
  post.iterations = it;
  for (int g = 0; g < G; ++g) {
    SpikeSlabPrior pr = priors[static_cast<std::size_t>(g)];
    pr.inclusion_logit = par.prior_logit(g);
    pr.slab_var = std::exp(par.prior_log_slab(g));
    post.priors.push_back(pr);
  }
  return post;
}

/// Single-group convenience overload.
inline SpikeSlabPosterior fit(const EigenRegressionProblem& prob, const SpikeSlabPrior& prior,
                              const SviOptions& opts, Rng& rng) {
  return fit(prob, std::vector<SpikeSlabPrior>(static_cast<std::size_t>(prob.num_groups()), prior),
             opts, rng);
}

}  // namespace cammel
