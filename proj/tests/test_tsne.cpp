#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "linkbench/error.hpp"
#include "linkbench/tsne.hpp"

using namespace linkbench;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

Tensor random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.normal();
  return Tensor::constant({n, d}, v);
}

// Two Gaussian blobs far apart in 5 dimensions.
Tensor two_clusters(std::size_t per, std::vector<int>& labels) {
  Rng rng(3);
  std::vector<double> v;
  labels.clear();
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      for (int k = 0; k < 5; ++k) v.push_back(rng.normal() + (c ? 20.0 : 0.0));
      labels.push_back(c);
    }
  }
  return Tensor::constant({2 * per, 5}, v);
}

// Entropy of the conditional row for a given precision, straight from the definition.
double oracle_entropy(const Tensor& x, std::size_t i, double beta) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> w(n, 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += (x.at(i, k) - x.at(j, k)) * (x.at(i, k) - x.at(j, k));
    w[j] = std::exp(-beta * s);
    z += w[j];
  }
  double h = 0.0;
  for (double v : w)
    if (v > 0) h -= (v / z) * std::log(v / z);
  return h;
}

}  // namespace

TEST_CASE("pairwise_affinities: equidistant points get equal affinities") {
  const Tensor x = Tensor::constant({3, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0});
  const auto a = pairwise_affinities(x, 1.5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.at(i, i) == 0.0);
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) CHECK(a.at(i, j) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  }
}

TEST_CASE("pairwise_affinities: symmetric, sums to one, entropy on target") {
  const Tensor x = random_points(60, 4, 11);
  const double perplexity = 10.0;
  const auto a = pairwise_affinities(x, perplexity);
  double total = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) {
    CHECK(a.at(i, i) == 0.0);
    for (std::size_t j = 0; j < a.n; ++j) {
      CHECK(a.at(i, j) == a.at(j, i));
      CHECK(a.at(i, j) >= 0.0);
      total += a.at(i, j);
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < a.n; ++i) CHECK(std::abs(a.row_entropy[i] - std::log(perplexity)) < 1e-4);
}

TEST_CASE("pairwise_affinities: bisection reaches the oracle's bandwidth") {
  // Independent bisection over beta with the definition-level entropy.
  const Tensor x = random_points(25, 3, 5);
  const double target = std::log(5.0);
  const auto a = pairwise_affinities(x, 5.0);
  for (std::size_t i = 0; i < x.rows(); i += 6) {
    double lo = 1e-8, hi = 1e4;
    for (int k = 0; k < 200; ++k) {
      const double mid = std::sqrt(lo * hi);
      (oracle_entropy(x, i, mid) > target ? lo : hi) = mid;
    }
    CHECK(oracle_entropy(x, i, lo) == doctest::Approx(target).epsilon(1e-6));
    CHECK(a.row_entropy[i] == doctest::Approx(target).epsilon(1e-4));
  }
}

TEST_CASE("pairwise_affinities: infeasible perplexity and tiny inputs") {
  CHECK_THROWS_AS(pairwise_affinities(random_points(5, 2, 1), 10.0), ConfigError);
  CHECK_THROWS_AS(pairwise_affinities(random_points(2, 2, 1), 1.0), ContractError);
}

TEST_CASE("tsne_project: deterministic for a fixed seed") {
  std::vector<int> labels;
  const Tensor x = two_clusters(15, labels);
  TsneConfig cfg;
  cfg.iterations = 300;
  cfg.perplexity = 5.0;
  cfg.seed = 42;
  const auto a = tsne_project(x, labels, cfg);
  const auto b = tsne_project(x, labels, cfg);
  REQUIRE(a.coords.size() == b.coords.size());
  for (std::size_t i = 0; i < a.coords.size(); ++i) CHECK(a.coords.at(i) == b.coords.at(i));
  cfg.seed = 43;
  const auto c = tsne_project(x, labels, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.coords.size(); ++i) differs = differs || a.coords.at(i) != c.coords.at(i);
  CHECK(differs);
}

TEST_CASE("tsne_project: separates two distant clusters and lowers KL") {
  std::vector<int> labels;
  const Tensor x = two_clusters(30, labels);
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  cfg.iterations = 500;
  const auto p = tsne_project(x, labels, cfg);
  // Every point's nearest planar neighbour shares its cluster.
  const std::size_t n = p.coords.rows();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i;
    double best_d = INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = p.coords.at(i, 0) - p.coords.at(j, 0), dy = p.coords.at(i, 1) - p.coords.at(j, 1);
      if (dx * dx + dy * dy < best_d) best_d = dx * dx + dy * dy, best = j;
    }
    CHECK(labels[best] == labels[i]);
  }
  REQUIRE(p.kl_trace.size() >= 2);
  CHECK(p.kl_trace.front().first == 0);
  CHECK(p.kl_trace.back().first == cfg.iterations);
  CHECK(p.kl_trace.back().second < p.kl_trace.front().second);
  // After exaggeration ends the objective settles downward.
  double prev = INFINITY;
  for (const auto& [it, kl] : p.kl_trace) {
    if (it <= cfg.exaggeration_iterations) continue;
    CHECK(kl <= prev + 1e-3);
    prev = kl;
  }
  double cx = 0, cy = 0;
  for (std::size_t i = 0; i < n; ++i) cx += p.coords.at(i, 0), cy += p.coords.at(i, 1);
  CHECK(std::abs(cx / n) < 1e-9);
  CHECK(std::abs(cy / n) < 1e-9);
}

TEST_CASE("tsne_project: three collinear points end below the starting KL") {
  const Tensor x = Tensor::constant({3, 1}, {0.0, 1.0, 2.0});
  const auto p = tsne_project(x, {0, 1, 2}, TsneConfig{});
  CHECK(p.kl_trace.back().second < p.kl_trace.front().second);
}

TEST_CASE("stratified_subsample keeps class shares") {
  std::vector<int> labels;
  for (int i = 0; i < 600; ++i) labels.push_back(0);
  for (int i = 0; i < 300; ++i) labels.push_back(1);
  for (int i = 0; i < 100; ++i) labels.push_back(2);
  Rng rng(1);
  const auto idx = stratified_subsample(labels, 100, rng);
  REQUIRE(idx.size() == 100);
  std::map<int, int> counts;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k) CHECK(idx[k - 1] < idx[k]);
    ++counts[labels[idx[k]]];
  }
  CHECK(counts[0] == 60);
  CHECK(counts[1] == 30);
  CHECK(counts[2] == 10);
  Rng rng2(1);
  CHECK(stratified_subsample(labels, 2000, rng2).size() == labels.size());
}

TEST_CASE("emit_scatter: csv round trip and svg contents") {
  Projection p;
  p.coords = Tensor::constant({3, 2}, {0.123456789012, -1.0, 2.5, 3.0, -4.0, 1e-7});
  p.labels = {0, 1, 2};
  const fs::path csv = fs::temp_directory_path() / "linkbench_tsne_test.csv";
  emit_scatter(p, csv, ScatterFormat::csv);
  std::ifstream in(csv);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "x,y,label");
  CHECK(first == "0.123456789,-1,0");
  const auto back = read_scatter_csv(csv);
  REQUIRE(back.coords.rows() == 3);
  CHECK(back.labels == p.labels);
  CHECK(back.coords.at(1, 0) == 2.5);
  fs::remove(csv);

  const fs::path svg = fs::temp_directory_path() / "linkbench_tsne_test.svg";
  emit_scatter(p, svg, ScatterFormat::svg, "demo");
  std::stringstream ss;
  ss << std::ifstream(svg).rdbuf();
  const std::string text = ss.str();
  std::size_t circles = 0;
  for (auto pos = text.find("<circle"); pos != std::string::npos; pos = text.find("<circle", pos + 1)) ++circles;
  CHECK(circles == 3);
  CHECK(text.find("class 2") != std::string::npos);
  CHECK(text.find("<line") == std::string::npos);
  fs::remove(svg);

  CHECK_THROWS_AS(emit_scatter(p, "/nonexistent_dir/x.csv", ScatterFormat::csv), FileError);
}

TEST_CASE("tsne_project: 16-D clusters 10 sigma apart stay apart in the plane") {
  Rng rng(8);
  std::vector<double> v;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 40; ++i) {
      for (int k = 0; k < 16; ++k) v.push_back(rng.normal() + (c && k == 0 ? 10.0 : 0.0));
      labels.push_back(c);
    }
  }
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  const auto p = tsne_project(Tensor::constant({80, 16}, v), labels, cfg);
  double cx[2] = {0, 0}, cy[2] = {0, 0};
  for (std::size_t i = 0; i < 80; ++i) {
    cx[labels[i]] += p.coords.at(i, 0) / 40.0;
    cy[labels[i]] += p.coords.at(i, 1) / 40.0;
  }
  double radius = 0.0;
  for (std::size_t i = 0; i < 80; ++i) radius += std::hypot(p.coords.at(i, 0) - cx[labels[i]], p.coords.at(i, 1) - cy[labels[i]]);
  radius /= 80.0;
  CHECK(std::hypot(cx[0] - cx[1], cy[0] - cy[1]) > 3.0 * radius);
}

TEST_CASE("emit_scatter: two nodes give a three-line csv") {
  Projection p;
  p.coords = Tensor::constant({2, 2}, {0.0, 1.0, 2.0, 3.0});
  p.labels = {0, 1};
  const fs::path csv = fs::temp_directory_path() / "linkbench_tsne_two.csv";
  emit_scatter(p, csv, ScatterFormat::csv);
  std::ifstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 3);
  fs::remove(csv);
}
