#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "cammel/bench.hpp"

using namespace cammel;
using Catch::Approx;

namespace {

// Step integral of the precision-recall curve, sum (R_k - R_{k-1}) P_k,
// walking a fully ranked list (already sorted by the caller).
double pr_step_integral(const std::vector<int>& hit, std::size_t positives) {
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < hit.size(); ++k) {
    tp += static_cast<std::size_t>(hit[k]);
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

PredictionRow row(const std::string& id, double score, int pred, bool causal, int sign) {
  return {id, score, pred, causal, sign};
}

ExperimentSpec tiny(std::uint64_t seed, int replicates) {
  ExperimentSpec spec;
  spec.scenario = ScenarioKind::custom;
  spec.config.K = 8;
  spec.config.n_causal = 1;
  spec.config.window_size = 8;
  spec.config.h_m2 = 0.3;
  spec.replicates = replicates;
  spec.seed = seed;
  spec.panel.n = 80;
  spec.panel.block_sizes = {50, 50, 90};
  spec.panel.analysis_blocks = 2;
  spec.mediation.svi.iterations = 300;
  spec.mediation.svi.step_size = 0.05;
  return spec;
}

}  // namespace

TEST_CASE("auprc basic cases", "[bench]") {
  PredictionTable t{row("a", 3, 1, true, 1), row("b", 2, -1, true, -1), row("c", 1, 1, false, 0)};
  CHECK(auprc_signed(t) == Approx(1.0));
  // single causal gene ranked first but with the wrong sign
  PredictionTable flip{row("a", 3, -1, true, 1), row("b", 2, 1, false, 0)};
  CHECK(auprc_signed(flip) == 0.0);
  PredictionTable none{row("a", 1, 1, false, 0)};
  try {
    auprc_signed(none);
    FAIL();
  } catch (const Error& e) {
    CHECK(e.code() == "NoPositives");
  }
  PredictionTable bad{row("a", std::nan(""), 1, true, 1)};
  CHECK_THROWS_AS(auprc_signed(bad), Error);
}

TEST_CASE("ties are broken by gene id", "[bench]") {
  PredictionTable t{row("b", 1, 1, false, 0), row("a", 1, 1, true, 1)};
  CHECK(auprc_signed(t) == Approx(1.0));
  PredictionTable u{row("a", 1, 1, false, 0), row("b", 1, 1, true, 1)};
  CHECK(auprc_signed(u) == Approx(0.5));
}

TEST_CASE("causal genes ranked last give the analytic worst case", "[bench]") {
  for (std::size_t total = 2; total <= 8; ++total) {
    for (std::size_t pos = 1; pos <= total; ++pos) {
      PredictionTable t;
      for (std::size_t i = 0; i < total; ++i) {
        const bool causal = i >= total - pos;
        t.push_back(row("g" + std::to_string(i), double(total - i), 1, causal, causal ? 1 : 0));
      }
      double expect = 0;
      for (std::size_t i = 1; i <= pos; ++i) expect += double(i) / double(total - pos + i);
      CHECK(auprc_signed(t) == Approx(expect / double(pos)).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: auprc equals exhaustive PR enumeration", "[bench][property]") {
  // every ranking of 6 genes, every causal subset of size 1..3, one flipped sign pattern
  const std::size_t N = 6;
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  int checked = 0;
  do {
    for (unsigned mask = 1; mask < (1u << N); ++mask) {
      if (__builtin_popcount(mask) > 3) continue;
      PredictionTable t;
      std::vector<int> hit(N, 0);
      std::size_t positives = 0;
      for (std::size_t g = 0; g < N; ++g) {
        const bool causal = (mask >> g) & 1u;
        positives += causal;
        // gene 5 always carries the wrong predicted sign
        const int pred = g == 5 ? -1 : 1;
        t.push_back(row("g" + std::to_string(g), double(N - perm[g]), pred, causal, causal ? 1 : 0));
        hit[perm[g]] = causal && pred == 1;
      }
      CHECK(auprc_signed(t) == Approx(pr_step_integral(hit, positives)).epsilon(1e-12));
      ++checked;
    }
  } while (std::next_permutation(perm.begin(), perm.end()) && checked < 20000);
  CHECK(checked > 1000);
}

TEST_CASE("method and scenario names round trip", "[bench]") {
  for (Method m : all_methods()) CHECK(parse_method(to_string(m)) == m);
  CHECK(parse_method("fact") == Method::fact);
  CHECK_THROWS_AS(parse_method("lasso"), Error);
  CHECK(parse_scenario("confounded") == ScenarioKind::confounded);
  CHECK_THROWS_AS(parse_scenario("x"), Error);
}

TEST_CASE("experiment is deterministic and thread independent", "[bench]") {
  auto spec = tiny(3, 2);
  const auto a = run_experiment(spec);
  const auto b = run_experiment(spec);
  spec.threads = 2;
  const auto c = run_experiment(spec);
  REQUIRE(a.rows.size() == 2 * all_methods().size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].method == b.rows[i].method);
    CHECK(a.rows[i].auprc == b.rows[i].auprc);
    CHECK(a.rows[i].auprc == c.rows[i].auprc);
    CHECK(a.rows[i].error.empty());
    CHECK(a.rows[i].auprc >= 0.0);
    CHECK(a.rows[i].auprc <= 1.0);
  }
  // a method's result does not depend on which other methods were requested
  auto only = tiny(3, 2);
  only.methods = {Method::fact};
  const auto d = run_experiment(only);
  CHECK(d.rows[0].auprc == a.rows[1].auprc);
}

TEST_CASE("failures are isolated and recorded", "[bench][property]") {
  auto spec = tiny(4, 2);
  spec.config.h_m2 = 0.0;  // no causal gene: every score fails with NoPositives
  spec.methods = {Method::stwas, Method::otwas};
  const auto rep = run_experiment(spec);
  REQUIRE(rep.rows.size() == 4);
  for (const auto& r : rep.rows) {
    CHECK(std::isnan(r.auprc));
    CHECK(r.error.find("NoPositives") != std::string::npos);
  }
  const auto s = rep.summarize();
  CHECK(s[0].failed == 2);
  CHECK(std::isnan(s[0].mean));
  CHECK_THROWS_AS(run_experiment(tiny(1, 0)), Error);
}

TEST_CASE("property: summary recomputes from rows", "[bench][property]") {
  BenchmarkReport rep;
  const std::vector<double> v{0.2, 0.5, 0.9, std::nan("")};
  for (int i = 0; i < 4; ++i) rep.rows.push_back({"s", "m", i, v[std::size_t(i)], ""});
  rep.rows.push_back({"s", "k", 0, 0.4, ""});
  const auto s = rep.summarize();
  REQUIRE(s.size() == 2);
  const double mean = (0.2 + 0.5 + 0.9) / 3;
  const double sd = std::sqrt(((0.2 - mean) * (0.2 - mean) + (0.5 - mean) * (0.5 - mean) +
                               (0.9 - mean) * (0.9 - mean)) / 2);
  CHECK(std::abs(s[0].mean - mean) < 1e-12);
  CHECK(std::abs(s[0].sd - sd) < 1e-12);
  CHECK(s[0].finite == 3);
  CHECK(s[0].failed == 1);
  CHECK(s[1].sd == 0.0);
  CHECK(rep.mean_of("k") == 0.4);
}
