#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "linkbench/error.hpp"
#include "linkbench/metrics.hpp"
#include "metric_oracles.hpp"

using namespace linkbench;

TEST_CASE("roc_auc: separated, tied and single-class inputs") {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  CHECK(roc_auc(s, y) == 1.0);
  const std::vector<double> flat(4, 0.3);
  CHECK(roc_auc(flat, y) == 0.5);
  const std::vector<int> one_class{1, 1, 1, 1};
  CHECK_THROWS_AS(roc_auc(s, one_class), MetricError);
  CHECK_THROWS_AS(average_precision(s, one_class), MetricError);
}

TEST_CASE("average_precision: the two orderings of one positive and one negative") {
  const std::vector<int> y{1, 0};
  CHECK(average_precision(std::vector<double>{0.7, 0.3}, y) == 1.0);
  CHECK(average_precision(std::vector<double>{0.3, 0.7}, y) == 0.5);
}

TEST_CASE("roc_auc equals the pairwise oracle exactly on 200 random scores") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = oracle::random_instance(200, rng, trial % 2 == 0);
    CHECK(roc_auc(inst.scores, inst.labels) == oracle::pairwise_auc(inst.scores, inst.labels));
  }
}

TEST_CASE("average_precision matches the PR-curve oracle on 200 random scores") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = oracle::random_instance(200, rng, trial % 2 == 0);
    CHECK(std::abs(average_precision(inst.scores, inst.labels) - oracle::pr_curve_ap(inst.scores, inst.labels)) <=
          1e-12);
  }
}

TEST_CASE("metrics are invariant under strictly increasing transforms") {
  Rng rng(3);
  auto inst = oracle::random_instance(150, rng, true);
  std::vector<double> t(inst.scores.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::exp(3.0 * inst.scores[i]) + 7.0;
  CHECK(roc_auc(t, inst.labels) == roc_auc(inst.scores, inst.labels));
  CHECK(average_precision(t, inst.labels) == average_precision(inst.scores, inst.labels));
}

TEST_CASE("roc_auc of negated scores is the complement when there are no ties") {
  Rng rng(4);
  auto inst = oracle::random_instance(120, rng, false);
  std::vector<double> neg(inst.scores.size());
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -inst.scores[i];
  CHECK(roc_auc(inst.scores, inst.labels) + roc_auc(neg, inst.labels) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("percentile interpolates linearly") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 5.0);
  CHECK(percentile(v, 0.5) == 3.0);
  CHECK(percentile(v, 0.1) == doctest::Approx(1.4));
}

TEST_CASE("bootstrap_ci: degenerate and single-value inputs") {
  Rng rng(5);
  const std::vector<double> same(10, 0.42);
  const auto a = bootstrap_ci(same, 0.95, 1000, rng);
  CHECK(a.lo == 0.42);
  CHECK(a.hi == 0.42);
  const std::vector<double> one{0.9};
  const auto b = bootstrap_ci(one, 0.95, 200, rng);
  CHECK(b.lo == 0.9);
  CHECK(b.hi == 0.9);
}

TEST_CASE("bootstrap_ci width for 50 draws from N(0.9, 0.005^2)") {
  // Half-width is about 1.96 * 0.005 / sqrt(50) = 0.0014, so the full width
  // sits near 0.0028.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    std::vector<double> v(50);
    for (auto& x : v) x = 0.9 + 0.005 * rng.normal();
    const auto ci = bootstrap_ci(v, 0.95, 1000, rng);
    CHECK(ci.hi - ci.lo >= 0.001);
    CHECK(ci.hi - ci.lo <= 0.006);
  }
}

TEST_CASE("evaluate_split: constructed separation scores perfectly") {
  // Nodes 0,1 share a norm-10 vector; nodes 2,3 are orthogonal to each other.
  const auto z = ad::Tensor::constant({4, 2}, {10, 0, 10, 0, 0, 1, 1, 0});
  const auto m = evaluate_split(z, {{0, 1}}, {{2, 3}, {0, 2}});
  CHECK(m.auc == 1.0);
  CHECK(m.ap == 1.0);
}

TEST_CASE("evaluate_split agrees with the composed oracles") {
  Rng rng(6);
  std::vector<double> zv(30 * 5);
  for (auto& x : zv) x = rng.normal() * 0.5;
  const auto z = ad::Tensor::constant({30, 5}, zv);
  EdgeList pos, neg;
  for (int i = 0; i < 40; ++i) {
    const auto u = rng.below(30), v = rng.below(30);
    (i % 2 ? pos : neg).push_back(Edge::canonical(u, v));
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto* list : {&pos, &neg}) {
    for (const auto& e : *list) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 5; ++k) dot += zv[e.u * 5 + k] * zv[e.v * 5 + k];
      scores.push_back(1.0 / (1.0 + std::exp(-dot)));
      labels.push_back(list == &pos ? 1 : 0);
    }
  }
  const auto m = evaluate_split(z, pos, neg);
  CHECK(m.auc == oracle::pairwise_auc(scores, labels));
  CHECK(std::abs(m.ap - oracle::pr_curve_ap(scores, labels)) <= 1e-12);
}

TEST_CASE("summarize_runs: means, single run and interval ordering") {
  const auto one = summarize_runs("cora", "gcn", {0.91}, {0.93}, 1000, 7);
  CHECK(one.mean_auc == 0.91);
  CHECK(one.ci95_auc.lo == 0.91);
  CHECK(one.ci95_auc.hi == 0.91);
  CHECK(one.std_auc == 0.0);

  const std::vector<double> auc{0.90, 0.92, 0.91, 0.93};
  const auto r = summarize_runs("cora", "gcn", auc, auc, 1000, 7);
  CHECK(r.mean_auc == (0.90 + 0.92 + 0.91 + 0.93) / 4.0);
  CHECK(r.ci95_auc.lo <= r.mean_auc);
  CHECK(r.mean_auc <= r.ci95_auc.hi);
  const auto again = summarize_runs("cora", "gcn", auc, auc, 1000, 7);
  CHECK(again.ci95_auc.lo == r.ci95_auc.lo);
  CHECK(again.ci95_ap.hi == r.ci95_ap.hi);
}
