// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cammel/cli.hpp"

using namespace cammel;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double sample_var(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double mean_of(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

double corr(const Vec& a, const Vec& b) {
  const Vec ca = a.array() - a.mean(), cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

// ---- 1. univariate statistics vs a least-squares oracle

Outcome oracle_sumstats() {
  Rng rng(101);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const Index n = 20 + static_cast<Index>(runif(rng) * 200);
    const Vec x = randn(n, rng);
    const Vec y = 0.3 * x + randn(n, rng);
    const auto f = univariate_stats(x, y, n);
    // oracle: QR least squares, residual variance over n, se^2 = s^2 / x^T x
    const Mat A = x;
    const Vec b = A.colPivHouseholderQr().solve(y);
    const double rss = (y - A * b).squaredNorm();
    const double se = std::sqrt(rss / static_cast<double>(n) / x.squaredNorm());
    worst = std::max({worst, std::abs(f.effect - b(0)) / std::abs(b(0)), std::abs(f.se - se) / se});
  }
  return {worst < 1e-10, "max relative error " + num(worst)};
}

// ---- 2. whitened null z-scores have identity covariance

Outcome whitening() {
  const BenchPanels panels = make_panels(PanelSpec{}, 7);
  const Index r = panels.eig.rank(), n = panels.analysis.n();
  Rng rng(202);
  const int draws = 2000;
  Mat C = Mat::Zero(r, r);
  Vec mean = Vec::Zero(r);
  for (int d = 0; d < draws; ++d) {
    const auto s = summarize_trait(panels.analysis, randn(n, rng), "null");
    const Vec eta = rotate_to_eigen(panels.eig, s.z);
    C.selfadjointView<Eigen::Lower>().rankUpdate(eta);
    mean += eta;
  }
  C = Mat(C.selfadjointView<Eigen::Lower>()) / draws;
  const double worst = (C - Mat::Identity(r, r)).cwiseAbs().maxCoeff();
  return {worst <= 0.15, "rank " + std::to_string(r) + ", max |cov - I| " + num(worst)};
}

// ---- 3. reparameterized gradient vs central differences

Outcome gradient_check() {
  Rng rng(303);
  auto prob = make_problem(randn(40, rng));
  prob.append(randn(40, 3, rng), 0, {"a", "b", "c"});
  VariationalParams par = initial_params(prob, {SpikeSlabPrior{}}, 1.3);
  par.logit_pip << 0.4, -0.7, 1.1;
  par.log_var << -1.2, -0.3, -2.0;
  const Mat eps = randn(40, 10000, rng);
  VariationalGrad g;
  expected_loglik_mc(prob, par, eps, &g);
  const double h = 1e-5;
  double worst = 0;
  auto check = [&](double analytic, const std::function<void(VariationalParams&, double)>& poke) {
    VariationalParams p = par, m = par;
    poke(p, h);
    poke(m, -h);
    const double fd = (expected_loglik_mc(prob, p, eps) - expected_loglik_mc(prob, m, eps)) / (2 * h);
    worst = std::max(worst, std::abs(analytic - fd) / std::max(std::abs(fd), 1e-8));
  };
  for (Index j = 0; j < 3; ++j) {
    check(g.mu(j), [j](VariationalParams& p, double d) { p.mu(j) += d; });
    check(g.logit_pip(j), [j](VariationalParams& p, double d) { p.logit_pip(j) += d; });
    check(g.log_var(j), [j](VariationalParams& p, double d) { p.log_var(j) += d; });
  }
  check(g.log_resid, [](VariationalParams& p, double d) { p.log_resid += d; });
  return {worst < 1e-4, "max relative error " + num(worst)};
}

// ---- 4. planted sparse recovery with an exact small-problem oracle

// Exact posterior inclusion over all subsets with a N(0, slab_var) slab and
// unit noise.
Vec exact_pips(const Mat& X, const Vec& y, double pi, double slab_var) {
  const Index q = X.cols(), r = X.rows();
  std::vector<double> logw;
  double top = -1e300;
  for (unsigned s = 0; s < (1u << q); ++s) {
    Mat S = Mat::Identity(r, r);
    int k = 0;
    for (Index j = 0; j < q; ++j)
      if ((s >> j) & 1u) {
        S += slab_var * X.col(j) * X.col(j).transpose();
        ++k;
      }
    Eigen::LLT<Mat> llt(S);
    const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    const double quad = y.dot(llt.solve(y));
    const double lw = -0.5 * (logdet + quad) + k * std::log(pi) + (q - k) * std::log1p(-pi);
    logw.push_back(lw);
    top = std::max(top, lw);
  }
  Vec pip = Vec::Zero(q);
  double total = 0;
  for (unsigned s = 0; s < logw.size(); ++s) {
    const double w = std::exp(logw[s] - top);
    total += w;
    for (Index j = 0; j < q; ++j)
      if ((s >> j) & 1u) pip(j) += w;
  }
  return pip / total;
}

Outcome planted_recovery() {
  const Index r = 200, q = 50;
  int ok = 0;
  double worst_true = 1, worst_null_share = 1, worst_oracle = 0;
  for (int seed = 1; seed <= 10; ++seed) {
    Rng rng(400 + seed);
    const Mat X = randn(r, q, rng);
    const Index t1 = static_cast<Index>(runif(rng) * q);
    Index t2 = t1;
    while (t2 == t1) t2 = static_cast<Index>(runif(rng) * q);
    // effect size five times the noise sd, random signs
    const double b1 = runif(rng) < 0.5 ? -5.0 : 5.0, b2 = runif(rng) < 0.5 ? -5.0 : 5.0;
    const Vec y = X.col(t1) * b1 + X.col(t2) * b2 + randn(r, rng);
    auto prob = make_problem(y);
    std::vector<std::string> ids;
    for (Index j = 0; j < q; ++j) ids.push_back("x" + std::to_string(j));
    prob.append(X, 0, ids);
    SviOptions o;
    Rng frng(500 + seed);
    const auto post = fit(prob, SpikeSlabPrior::expect_one_of(q), o, frng);
    int small = 0;
    for (Index j = 0; j < q; ++j)
      if (j != t1 && j != t2) small += post.pip(j) < 0.1;
    const double share = small / double(q - 2);
    const bool pass = post.pip(t1) > 0.9 && post.pip(t2) > 0.9 && share >= 0.95;
    worst_true = std::min({worst_true, post.pip(t1), post.pip(t2)});
    worst_null_share = std::min(worst_null_share, share);

    // 5-predictor subproblem: the two true columns and three nulls
    std::vector<Index> cols{t1, t2};
    for (Index j = 0; cols.size() < 5; ++j)
      if (j != t1 && j != t2) cols.push_back(j);
    Mat Xs(r, 5);
    for (int c = 0; c < 5; ++c) Xs.col(c) = X.col(cols[static_cast<std::size_t>(c)]);
    auto sub = make_problem(y);
    sub.append(Xs, 0, {"t1", "t2", "n1", "n2", "n3"});
    SviOptions so;
    so.learn_residual = false;
    Rng srng(600 + seed);
    const auto spost = fit(sub, SpikeSlabPrior::expect_one_of(5), so, srng);
    const Vec exact = exact_pips(Xs, y, 0.2, 1.0);
    worst_oracle = std::max(worst_oracle, (spost.pip - exact).cwiseAbs().maxCoeff());
    ok += pass && (spost.pip - exact).cwiseAbs().maxCoeff() < 0.05;
  }
  return {ok == 10, std::to_string(ok) + "/10 seeds; min true pip " + num(worst_true) +
                        ", min null share < 0.1 " + num(worst_null_share) + ", max |svi - exact| on 5-predictor " +
                        num(worst_oracle)};
}

// ---- 5. projection onto an independent block

Outcome projection() {
  const int reps = 200;
  const PanelSpec spec;
  const Index T = 3;  // GWAS and two genes
  std::vector<std::vector<double>> col_means(T);
  Rng rng(505);
  // fixed directional genetic effects on the analysis region
  const Index p_an = 600;
  Mat alpha = Mat::Zero(p_an, T);
  for (Index t = 0; t < T; ++t) {
    alpha.col(t) = Vec::Constant(p_an, 0.01) + 0.01 * randn(p_an, rng);
    for (Index j = 0; j < 5; ++j) alpha(static_cast<Index>(runif(rng) * p_an), t) += 0.1;
  }
  for (int r = 0; r < reps; ++r) {
    // a fresh pair of independent blocks for every replicate
    const BenchPanels panels = make_panels(spec, 9000 + static_cast<std::uint64_t>(r));
    const Index n = panels.analysis.n();
    std::vector<SummaryVector> traits;
    for (Index t = 0; t < T; ++t) {
      const Vec y = panels.analysis.values * alpha.col(t) + randn(n, rng);
      traits.push_back(summarize_trait(panels.analysis, y, t == 0 ? "gwas" : "gene" + std::to_string(t)));
    }
    const CombinedZ comb = combine(traits[0], {traits[1], traits[2]});
    const Mat Z0 = project_to_null_block(comb, panels.eig, panels.null_block).matrix();
    for (Index t = 0; t < T; ++t) col_means[static_cast<std::size_t>(t)].push_back(Z0.col(t).mean());
  }
  bool genetic_ok = true;
  std::string detail = "genetic column means in SE units:";
  for (Index t = 0; t < T; ++t) {
    const auto& v = col_means[static_cast<std::size_t>(t)];
    const double se = std::sqrt(sample_var(v) / reps);
    const double zscore = mean_of(v) / se;
    genetic_ok &= std::abs(zscore) < 3.0;
    detail += " " + num(zscore, 3);
  }

  // pure confounder
  const BenchPanels panels = make_panels(spec, 77);
  const Index n = panels.analysis.n();
  double worst = 1;
  for (int r = 0; r < 20; ++r) {
    const Vec u = randn(n, rng);
    const auto g = summarize_trait(panels.analysis, u, "gwas");
    const auto proj = project_to_null_block(combine(g, {}), panels.eig, panels.null_block);
    const Vec direct = panel_scale(n) * panels.null_block.values.transpose() * u;
    worst = std::min(worst, corr(proj.gwas.z, direct));
  }
  detail += "; confounder min corr " + num(worst, 6);
  return {genetic_ok && worst > 0.99, detail};
}

// ---- 6. variance-model signatures, one gene and one SNP

Outcome variance_models() {
  const Index n = 200;
  const int reps = 5000;
  const double a = 0.5, b = 0.5, g = 0.1, tau2 = 0.7, sig2 = 0.5;
  Rng rng(606);
  Vec x = randn(n, rng);
  x = (x.array() - x.mean()).matrix();
  x *= std::sqrt(static_cast<double>(n)) / x.norm();
  auto run = [&](bool asymmetric, std::vector<double>& ab, std::vector<double>& th) {
    for (int r = 0; r < reps; ++r) {
      const Vec delta = std::sqrt(tau2) * randn(n, rng);
      const Vec eps = std::sqrt(sig2) * randn(n, rng);
      const Vec m = x * a + delta;
      const Vec mediator = asymmetric ? m : Vec(x * a);
      const Vec y = mediator * b + x * g + eps;
      const double alpha_hat = x.dot(m) / x.squaredNorm();
      const Vec mu = x * alpha_hat;
      const double beta_hat = mu.dot(y) / mu.squaredNorm();
      ab.push_back(alpha_hat * beta_hat);
      th.push_back(x.dot(y) / x.squaredNorm());
    }
  };
  const double nd = static_cast<double>(n);
  auto within = [&](double v, double target) {
    // sampling sd of a variance estimate
    return std::abs(v - target) < 3.0 * target * std::sqrt(2.0 / (reps - 1));
  };
  std::vector<double> sab, sth, aab, ath;
  run(false, sab, sth);
  run(true, aab, ath);
  const double target_mean = a * b + g;
  const bool sym_mean = std::abs(mean_of(sab) - mean_of(sth)) < 3 * std::sqrt(sample_var(sab) / reps) &&
                        std::abs(mean_of(sab) - target_mean) < 3 * std::sqrt(sample_var(sab) / reps);
  const bool sym_var = within(sample_var(sab), sig2 / nd) && within(sample_var(sth), sig2 / nd);
  const double mediated_claim = (b * b * tau2 + sig2) / nd, direct_claim = (tau2 + sig2) / nd;
  const bool asym_mediated = within(sample_var(aab), mediated_claim);
  const bool asym_direct = within(sample_var(ath), direct_claim);
  const bool pass_a = sym_mean && sym_var;
  const bool pass_b = asym_mediated && asym_direct;
  std::string d = "(a) " + std::string(pass_a ? "ok" : "fail") + ": var(ab)*n=" + num(sample_var(sab) * nd) +
                  " var(theta)*n=" + num(sample_var(sth) * nd) + " vs " + num(sig2) + "; (b) " +
                  (pass_b ? "ok" : "fail") + ": var(ab)*n=" + num(sample_var(aab) * nd) + " vs claimed " +
                  num(b * b * tau2 + sig2) + ", var(theta)*n=" + num(sample_var(ath) * nd) + " vs claimed " +
                  num(tau2 + sig2) + ", gap*n=" + num((sample_var(aab) - sample_var(ath)) * nd) + " vs claimed " +
                  num(b * b * tau2 - tau2);
  return {pass_a && pass_b, d};
}

// ---- 7 and 8. qualitative reproductions

BenchmarkReport experiment(ScenarioKind kind, const ScenarioConfig& cfg, std::uint64_t seed) {
  ExperimentSpec spec;
  spec.scenario = kind;
  spec.config = cfg;
  spec.replicates = 20;
  spec.seed = seed;
  return run_experiment(spec);
}

std::string means_line(const BenchmarkReport& rep) {
  std::string s;
  for (const auto& m : rep.summarize()) s += " " + m.method + "=" + num(m.mean, 3);
  return s;
}

Outcome polygenic_ordering() {
  ScenarioConfig cfg = polygenic_defaults();
  cfg.K = 40;
  int holds = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto rep = experiment(ScenarioKind::polygenic, cfg, seed);
    double best_baseline = 0, best_any = 0;
    for (const char* b : {"stwas", "ivw", "egger"}) best_baseline = std::max(best_baseline, rep.mean_of(b));
    std::string best_name;
    for (const auto& m : rep.summarize())
      if (m.mean > best_any) {
        best_any = m.mean;
        best_name = m.method;
      }
    const double f = rep.mean_of("cammel_fact"), p = rep.mean_of("cammel_proj");
    const bool ok = f - best_baseline >= 0.10 && p - best_baseline >= 0.10 && best_name != "egger";
    holds += ok;
    detail += "seed " + std::to_string(seed) + (ok ? " holds" : " fails") + ":" + means_line(rep) + "; ";
  }
  return {holds >= 2, std::to_string(holds) + "/3 seeds. " + detail};
}

Outcome confounded_ordering() {
  int holds_a = 0, holds_b = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto clean = experiment(ScenarioKind::confounded, confounded_defaults(0.0, 0.0), seed);
    bool ok_a = true;
    for (const auto& m : clean.summarize())
      if (m.method != "cammel_naive") ok_a &= m.mean >= 0.9;
    holds_a += ok_a;
    const auto conf = experiment(ScenarioKind::confounded, confounded_defaults(0.3, 0.3), seed);
    const double p = conf.mean_of("cammel_proj");
    const bool ok_b = p - conf.mean_of("otwas") >= 0.10 && p - conf.mean_of("cammel_naive") >= 0.10;
    holds_b += ok_b;
    detail += "seed " + std::to_string(seed) + " (a)" + (ok_a ? " holds" : " fails") + ":" + means_line(clean) +
              " (b)" + (ok_b ? " holds" : " fails") + ":" + means_line(conf) + "; ";
  }
  return {holds_a >= 2 && holds_b >= 2,
          "(a) " + std::to_string(holds_a) + "/3, (b) " + std::to_string(holds_b) + "/3. " + detail};
}

// ---- 9. AUPRC against exhaustive enumeration

Outcome auprc_oracle() {
  const int N = 8, P = 3;
  int configs = 0, mismatches = 0;
  double worst = 0;
  // causal positions in the ranking and a sign-correctness pattern for each
  for (unsigned mask = 0; mask < (1u << N); ++mask) {
    if (__builtin_popcount(mask) != P) continue;
    for (unsigned signs = 0; signs < (1u << P); ++signs) {
      PredictionTable t;
      std::vector<int> hit;
      int c = 0;
      for (int rank = 0; rank < N; ++rank) {
        const bool causal = (mask >> rank) & 1u;
        const bool right = causal && ((signs >> c) & 1u);
        if (causal) ++c;
        t.push_back({"g" + std::to_string(rank), double(N - rank), right ? 1 : -1, causal, causal ? 1 : 0});
        hit.push_back(right);
      }
      // oracle in exact integer arithmetic: AP = sum_k hit_k tp_k / k / P, scaled by lcm(1..8) = 840
      long num_840 = 0;
      int tp = 0;
      for (int k = 0; k < N; ++k)
        if (hit[static_cast<std::size_t>(k)]) num_840 += 840L * ++tp / (k + 1);
      const double oracle = static_cast<double>(num_840) / 840.0 / P;
      const double got = auprc_signed(t);
      const double diff = std::abs(got - oracle);
      worst = std::max(worst, diff);
      mismatches += diff > 4 * std::numeric_limits<double>::epsilon();
      ++configs;
    }
  }
  return {mismatches == 0, std::to_string(configs) + " configurations, max |diff| " + num(worst) +
                               " (rounding of the last bit allowed)"};
}

// ---- 10. end-to-end determinism through the command-line tool

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "cammel_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const json cfg = {{"scenario", {{"K", 20}, {"n_causal", 2}}}};
  io::write_json(root / "cfg.json", cfg);
  const std::string exe = CAMMEL_CLI_PATH;
  auto sh = [](const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); };
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    if (sh(exe + " simulate --config " + (root / "cfg.json").string() + " --seed 42 --out " + (d / "sim").string()))
      return {false, "simulate failed"};
    for (const char* m : {"naive", "fact", "proj", "stwas", "ivw", "egger", "otwas"}) {
      if (sh(exe + " fit --method " + m + " --seed 42 --dir " + (d / "sim").string() + " --out " +
             (d / (std::string("fit_") + m + ".tsv")).string()))
        return {false, std::string("fit ") + m + " failed"};
    }
    if (sh(exe + " benchmark --config " + (root / "cfg.json").string() + " --seed 42 --replicates 2 --out " +
           (d / "report.tsv").string()))
      return {false, "benchmark failed"};
  }
  int files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    ++files;
    differ += slurp(e.path()) != slurp(root / "b" / rel);
  }
  return {files > 0 && differ == 0, std::to_string(files) + " files compared, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "summary statistics oracle", 1, oracle_sumstats},
      {2, "whitening covariance", 10, whitening},
      {3, "SVI gradient check", 30, gradient_check},
      {4, "planted sparse recovery", 120, planted_recovery},
      {5, "projection annihilation", 120, projection},
      {6, "variance-model signatures", 120, variance_models},
      {7, "polygenic ordering", 900, polygenic_ordering},
      {8, "confounded ordering", 900, confounded_ordering},
      {9, "AUPRC exhaustive oracle", 60, auprc_oracle},
      {10, "end-to-end determinism", 600, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %2d: %s  %s  [%.1f s of %.0f s]  %s\n", c.id, pass ? "PASS" : "FAIL", c.name, secs,
                c.limit_seconds, (o.detail + (in_time ? "" : " (over time limit)")).c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
