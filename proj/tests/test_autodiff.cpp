#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "finite_difference.hpp"
#include "linkbench/autodiff.hpp"
#include "linkbench/error.hpp"

using namespace linkbench;
using namespace linkbench::ad;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor::constant({r, c}, std::move(v)); }

SparseMatrix random_csr(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (rng.bernoulli(density)) t.push_back({r, c, rng.uniform(-2.0, 2.0)});
    }
  }
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

// Dense reference product, test-only.
std::vector<double> dense_product(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += a[i * k + p] * b[p * n + j];
  return out;
}

}  // namespace

TEST_CASE("matmul: identity and hand example") {
  Tape tape;
  auto m = mat(2, 2, {1.5, -2, 3, 0.25});
  auto id = mat(2, 2, {1, 0, 0, 1});
  auto y = matmul(tape, id, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == m.at(i));

  auto z = matmul(tape, mat(2, 2, {1, 2, 3, 4}), mat(2, 1, {1, 1}));
  CHECK(z.shape() == Shape{2, 1});
  CHECK(z.at(0) == 3.0);
  CHECK(z.at(1) == 7.0);
}

TEST_CASE("matmul: shape error names both shapes") {
  Tape tape;
  try {
    matmul(tape, mat(2, 3, std::vector<double>(6)), mat(2, 2, std::vector<double>(4)));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul: gradient of sum(A*B) wrt A is ones * B^T") {
  Rng rng(3);
  auto a = fdcheck::random_param({3, 4}, rng);
  auto b = fdcheck::random_param({4, 2}, rng);
  Tape tape;
  tape.backward(sum(tape, matmul(tape, a, b)));
  const auto ga = a.grad();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) CHECK(ga[i * 4 + p] == doctest::Approx(b.at(p, 0) + b.at(p, 1)).epsilon(1e-14));

  auto rep = fdcheck::check([](Tape& t, std::vector<Tensor>& p) { return sum(t, matmul(t, p[0], p[1])); }, {a, b});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("spmm: identity, empty rows and dense oracle") {
  Rng rng(11);
  Tape tape;
  auto m = fdcheck::random_param({6, 3}, rng);
  auto y = spmm(tape, SparseMatrix::identity(6), m);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(y.at(i) == m.at(i));

  auto s = SparseMatrix::from_triplets(3, 2, {{0, 0, 2.0}, {2, 1, -1.0}});
  auto out = spmm(tape, s, mat(2, 2, {1, 2, 3, 4}));
  CHECK(out.at(1, 0) == 0.0);
  CHECK(out.at(1, 1) == 0.0);

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(8), cols = 1 + rng.below(8), n = 1 + rng.below(4);
    auto sp = random_csr(rows, cols, 0.4, rng);
    auto d = fdcheck::random_param({cols, n}, rng);
    auto got = spmm(tape, sp, d);
    auto ref = dense_product(sp.to_dense(), std::vector<double>(d.value().begin(), d.value().end()), rows, cols, n);
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(got.at(i) == ref[i]);
  }
  CHECK_THROWS_AS(spmm(tape, SparseMatrix::identity(3), mat(2, 1, {1, 1})), ShapeError);
}

TEST_CASE("spmm: gradient flows to the dense operand only") {
  Rng rng(5);
  auto sp = std::make_shared<const SparseMatrix>(random_csr(5, 4, 0.5, rng));
  auto d = fdcheck::random_param({4, 3}, rng);
  auto rep = fdcheck::check(
      [sp](Tape& t, std::vector<Tensor>& p) {
        auto y = spmm(t, sp, p[0]);
        return sum(t, mul(t, y, y));
      },
      {d});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("elementwise: definitions") {
  Tape tape;
  CHECK(sigmoid(tape, Tensor::scalar(0.0)).item() == 0.5);
  CHECK(leaky_relu(tape, Tensor::scalar(-1.0), 0.2).item() == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(relu(tape, Tensor::scalar(-3.0)).item() == 0.0);
  CHECK(softplus(tape, Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0)));
  CHECK(softplus(tape, Tensor::scalar(800.0)).item() == 800.0);
  CHECK(std::isfinite(softplus(tape, Tensor::scalar(-800.0)).item()));
  CHECK(elu(tape, Tensor::scalar(-1.0)).item() == doctest::Approx(std::expm1(-1.0)));
  CHECK_THROWS_AS(log(tape, Tensor::scalar(0.0)), DomainError);
  CHECK_THROWS_AS(log(tape, Tensor::scalar(-1.0)), DomainError);
  CHECK_THROWS_AS(add(tape, mat(2, 1, {1, 2}), mat(1, 2, {1, 2})), ShapeError);
  auto s = add(tape, Tensor::scalar(1.0), mat(1, 2, {1, 2}));
  CHECK(s.shape() == Shape{1, 2});
  CHECK(s.at(1) == 3.0);
}

TEST_CASE("elementwise: every unary op passes finite differences") {
  Rng rng(21);
  const std::vector<std::pair<const char*, std::function<Tensor(Tape&, const Tensor&)>>> ops = {
      {"relu", [](Tape& t, const Tensor& x) { return relu(t, x); }},
      {"leaky_relu", [](Tape& t, const Tensor& x) { return leaky_relu(t, x, 0.2); }},
      {"elu", [](Tape& t, const Tensor& x) { return elu(t, x); }},
      {"sigmoid", [](Tape& t, const Tensor& x) { return sigmoid(t, x); }},
      {"exp", [](Tape& t, const Tensor& x) { return exp(t, x); }},
      {"log", [](Tape& t, const Tensor& x) { return log(t, add_scalar(t, x, 1.5)); }},
      {"neg", [](Tape& t, const Tensor& x) { return neg(t, x); }},
      {"softplus", [](Tape& t, const Tensor& x) { return softplus(t, x); }},
      {"scale", [](Tape& t, const Tensor& x) { return scale(t, x, -3.0); }},
  };
  for (const auto& [name, op] : ops) {
    CAPTURE(name);
    auto x = fdcheck::random_param({4, 3}, rng);
    auto w = Tensor::constant({4, 3}, [&] {
      std::vector<double> v(12);
      for (auto& e : v) e = rng.uniform(-1, 1);
      return v;
    }());
    auto rep = fdcheck::check([&](Tape& t, std::vector<Tensor>& p) { return sum(t, mul(t, op(t, p[0]), w)); }, {x});
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("elementwise: binary ops pass finite differences, including scalar broadcast") {
  Rng rng(8);
  auto a = fdcheck::random_param({3, 2}, rng);
  auto b = fdcheck::random_param({3, 2}, rng);
  auto c = fdcheck::random_param({}, rng);
  auto rep = fdcheck::check(
      [](Tape& t, std::vector<Tensor>& p) {
        auto x = add(t, mul(t, p[0], p[1]), sub(t, p[0], p[2]));
        return sum(t, mul(t, x, mul(t, p[2], x)));
      },
      {a, b, c});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("segment_softmax: singletons, symmetry, dense oracle, gradient") {
  Tape tape;
  const std::vector<std::size_t> one{0};
  CHECK(segment_softmax(tape, Tensor::constant({1}, {4.2}), one).at(0) == 1.0);
  for (double c : {-50.0, 0.0, 3.0, 700.0}) {
    const std::vector<std::size_t> seg{0, 0};
    auto y = segment_softmax(tape, Tensor::constant({2}, {c, c}), seg);
    CHECK(y.at(0) == 0.5);
    CHECK(y.at(1) == 0.5);
  }
  const std::vector<std::size_t> unsorted{1, 0};
  CHECK_THROWS_AS(segment_softmax(tape, Tensor::constant({2}, {1, 2}), unsorted), ContractError);

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> seg;
    const std::size_t segments = 1 + rng.below(5);
    for (std::size_t s = 0; s < segments; ++s)
      for (std::size_t k = 0, len = 1 + rng.below(4); k < len; ++k) seg.push_back(s * 3);
    std::vector<double> x(seg.size());
    for (auto& v : x) v = rng.uniform(-3, 3);
    auto y = segment_softmax(tape, Tensor::constant({x.size()}, x), seg);
    // Dense per-segment oracle.
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j)
        if (seg[j] == seg[i]) z += std::exp(x[j]);
      CHECK(y.at(i) == doctest::Approx(std::exp(x[i]) / z).epsilon(1e-12));
      CHECK(y.at(i) > 0.0);
      CHECK(y.at(i) <= 1.0);
    }
    for (std::size_t s = 0; s < segments; ++s) {
      double total = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (seg[i] == s * 3) total += y.at(i);
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
    auto w = Tensor::constant({x.size()}, [&] {
      std::vector<double> v(x.size());
      for (auto& e : v) e = rng.uniform(-1, 1);
      return v;
    }());
    auto p = Tensor::parameter({x.size()}, x);
    auto rep = fdcheck::check([&](Tape& t, std::vector<Tensor>& q) { return sum(t, mul(t, segment_softmax(t, q[0], seg), w)); },
                              {p});
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("rows_l2_normalize") {
  Tape tape;
  auto y = rows_l2_normalize(tape, mat(2, 2, {3, 4, 0, 0}));
  CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(y.at(1, 0) == 0.0);
  CHECK(y.at(1, 1) == 0.0);

  Rng rng(4);
  auto x = fdcheck::random_param({20, 5}, rng);
  auto n = rows_l2_normalize(tape, x);
  for (std::size_t r = 0; r < 20; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < 5; ++c) ss += n.at(r, c) * n.at(r, c);
    CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-9);
  }
  auto w = fdcheck::random_param({4, 3}, rng);
  auto rep = fdcheck::check(
      [&](Tape& t, std::vector<Tensor>& p) {
        auto z = rows_l2_normalize(t, p[0]);
        return sum(t, mul(t, z, Tensor::constant({4, 3}, std::vector<double>(w.value().begin(), w.value().end()))));
      },
      {fdcheck::random_param({4, 3}, rng)});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("dropout") {
  Tape tape;
  Rng rng(1);
  auto x = fdcheck::random_param({10, 10}, rng);
  auto same = dropout(tape, x, 0.0, true, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.at(i) == x.at(i));
  auto eval = dropout(tape, x, 0.9, false, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(eval.at(i) == x.at(i));
  CHECK_THROWS_AS(dropout(tape, x, 1.0, true, rng), ConfigError);

  auto big = Tensor::constant({100000}, std::vector<double>(100000, 1.0));
  auto d = dropout(tape, big, 0.6, true, rng);
  std::size_t zeros = 0;
  for (double v : d.value()) {
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(2.5));
  }
  const double frac = static_cast<double>(zeros) / 1e5;
  CHECK(frac >= 0.59);
  CHECK(frac <= 0.61);
}

TEST_CASE("concat_cols") {
  Tape tape;
  auto m = mat(3, 2, {1, 2, 3, 4, 5, 6});
  auto empty = Tensor::constant({3, 0}, {});
  auto same = concat_cols(tape, m, empty);
  CHECK(same.shape() == Shape{3, 2});
  for (std::size_t i = 0; i < 6; ++i) CHECK(same.at(i) == m.at(i));
  CHECK(concat_cols(tape, m, Tensor::zeros({3, 5})).shape() == Shape{3, 7});
  CHECK_THROWS_AS(concat_cols(tape, m, Tensor::zeros({2, 1})), ShapeError);

  Rng rng(2);
  auto a = fdcheck::random_param({3, 2}, rng);
  auto b = fdcheck::random_param({3, 5}, rng);
  auto w = fdcheck::random_param({3, 7}, rng);
  {
    Tape t;
    auto c = concat_cols(t, a, b);
    t.backward(sum(t, mul(t, c, w)));
    // The two slices of the upstream gradient land exactly on the two inputs.
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t k = 0; k < 2; ++k) CHECK(a.grad()[r * 2 + k] == w.at(r, k));
      for (std::size_t k = 0; k < 5; ++k) CHECK(b.grad()[r * 5 + k] == w.at(r, 2 + k));
    }
  }
  auto wc = Tensor::constant({3, 7}, std::vector<double>(w.value().begin(), w.value().end()));
  auto rep = fdcheck::check(
      [&](Tape& t, std::vector<Tensor>& p) {
        auto c = concat_cols(t, p[0], p[1]);
        return sum(t, mul(t, mul(t, c, c), wc));
      },
      {a, b});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("gather_rows") {
  Tape tape;
  auto x = mat(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> all{0, 1, 2};
  auto y = gather_rows(tape, x, all);
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.at(i) == x.at(i));
  CHECK(gather_rows(tape, x, std::vector<std::size_t>{}).shape() == Shape{0, 2});
  CHECK_THROWS_AS(gather_rows(tape, x, std::vector<std::size_t>{3}), IndexError);

  Rng rng(9);
  auto p = fdcheck::random_param({4, 3}, rng);
  const std::vector<std::size_t> dup{2, 0, 2, 3};
  auto w = Tensor::constant({4, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  {
    Tape t;
    t.backward(sum(t, mul(t, gather_rows(t, p, dup), w)));
    // Row 2 is taken twice: its gradient is upstream row 0 plus upstream row 2.
    CHECK(p.grad()[2 * 3 + 0] == 1.0 + 7.0);
    CHECK(p.grad()[2 * 3 + 2] == 3.0 + 9.0);
    CHECK(p.grad()[1 * 3 + 0] == 0.0);
  }
  auto rep = fdcheck::check(
      [&](Tape& t, std::vector<Tensor>& q) {
        auto g = gather_rows(t, q[0], dup);
        return sum(t, mul(t, mul(t, g, g), w));
      },
      {p});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("edge_aggregate: dense oracle and gradients") {
  Rng rng(12);
  const std::vector<std::size_t> src{0, 1, 2, 2, 1};
  const std::vector<std::size_t> dst{0, 0, 1, 2, 2};
  auto w = fdcheck::random_param({5}, rng);
  auto v = fdcheck::random_param({3, 2}, rng);
  Tape tape;
  auto out = edge_aggregate(tape, w, v, src, dst, 3);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(out.at(0, c) == doctest::Approx(w.at(0) * v.at(0, c) + w.at(1) * v.at(1, c)));
    CHECK(out.at(2, c) == doctest::Approx(w.at(3) * v.at(2, c) + w.at(4) * v.at(1, c)));
  }
  auto rep = fdcheck::check(
      [&](Tape& t, std::vector<Tensor>& p) {
        auto o = edge_aggregate(t, p[0], p[1], src, dst, 3);
        return sum(t, mul(t, o, o));
      },
      {w, v});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("backward: contracts and accumulation") {
  Rng rng(6);
  auto x = fdcheck::random_param({2, 3}, rng);
  {
    Tape t;
    t.backward(sum(t, x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  x.zero_grad();
  {
    Tape t;
    t.backward(sum(t, mul(t, x, x)));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 2.0 * x.at(i));
  }
  x.zero_grad();
  {
    // Repeated backward without reset accumulates into leaves.
    Tape t;
    auto loss = sum(t, scale(t, x, 3.0));
    t.backward(loss);
    t.backward(loss);
    for (double g : x.grad()) CHECK(g == 6.0);
    CHECK_THROWS_AS(t.backward(x), ContractError);
  }
  // Unreachable parameters are untouched.
  auto other = fdcheck::random_param({2, 2}, rng);
  {
    Tape t;
    t.backward(sum(t, x));
    CHECK_FALSE(other.has_grad());
  }
  // A tensor used on two paths receives the sum of both adjoints.
  x.zero_grad();
  {
    Tape t;
    auto y = exp(t, x);
    t.backward(add(t, sum(t, y), sum(t, scale(t, y, 2.0))));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(3.0 * std::exp(x.at(i))));
  }
}

TEST_CASE("tape records parents before children with unique ids") {
  Rng rng(6);
  auto x = fdcheck::random_param({2, 2}, rng);
  Tape t;
  auto y = relu(t, matmul(t, x, x));
  auto z = sum(t, add(t, y, x));
  std::set<std::uint64_t> ids;
  std::uint64_t prev = 0;
  for (const auto& n : t.nodes()) {
    CHECK(n->id > prev);
    prev = n->id;
    ids.insert(n->id);
  }
  CHECK(ids.size() == t.size());
  CHECK(z.id() == prev);

  Tape off(false);
  auto c = matmul(off, x, x);
  CHECK(off.size() == 0);
  CHECK_FALSE(c.requires_grad());
}

TEST_CASE("composite GCN-style loss on a 5-node graph matches finite differences") {
  Rng rng(31);
  std::vector<Triplet> t;
  const std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}};
  std::vector<double> deg(5, 1.0);
  for (auto [u, v] : edges) deg[u] += 1, deg[v] += 1;
  for (std::size_t i = 0; i < 5; ++i) t.push_back({i, i, 1.0 / deg[i]});
  for (auto [u, v] : edges) {
    const double w = 1.0 / std::sqrt(deg[u] * deg[v]);
    t.push_back({u, v, w});
    t.push_back({v, u, w});
  }
  auto adj = std::make_shared<const SparseMatrix>(SparseMatrix::from_triplets(5, 5, t));
  auto x = Tensor::constant({5, 3}, [&] {
    std::vector<double> v(15);
    for (auto& e : v) e = rng.uniform(-1, 1);
    return v;
  }());
  auto w1 = fdcheck::random_param({3, 4}, rng);
  auto w2 = fdcheck::random_param({4, 2}, rng);
  const std::vector<std::size_t> u{0, 1, 2}, v{1, 3, 4};
  auto rep = fdcheck::check(
      [&](Tape& tp, std::vector<Tensor>& p) {
        auto h = relu(tp, spmm(tp, adj, matmul(tp, x, p[0])));
        auto z = spmm(tp, adj, matmul(tp, h, p[1]));
        auto logits = sum_rows(tp, mul(tp, gather_rows(tp, z, u), gather_rows(tp, z, v)));
        return mean(tp, softplus(tp, neg(tp, logits)));
      },
      {w1, w2});
  CHECK(rep.max_rel_error < 1e-4);
}
