#pragma once

// Finite-difference checks for every layer, loss and full model on small
// random graphs. Shared by the unit tests and the acceptance runner.

#include <string>
#include <vector>

#include "finite_difference.hpp"
#include "linkbench/graph_data.hpp"
#include "linkbench/models.hpp"
#include "linkbench/training.hpp"

namespace gradsuite {

using namespace linkbench;
using ad::Tape;
using ad::Tensor;

inline constexpr double kLayerLimit = 1e-4;
inline constexpr double kModelLimit = 1e-3;

struct Result {
  std::string name;
  double rel_error = 0.0;
  double limit = 0.0;
  std::size_t checked = 0;
  bool ok() const { return rel_error < limit; }
};

struct Instance {
  std::size_t n = 0;
  EdgeList edges;
  EdgeList pos, neg;
  Tensor features;  // constant n x f
};

inline Instance random_instance(std::size_t n, std::size_t f, linkbench::Rng& rng) {
  Instance g;
  g.n = n;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(0.35)) g.edges.push_back({u, v});
  std::vector<double> x(n * f);
  for (auto& e : x) e = rng.bernoulli(0.6) ? rng.uniform(0.1, 1.0) : 0.0;
  g.features = Tensor::constant({n, f}, std::move(x));
  for (std::size_t i = 0; i < 6; ++i) {
    g.pos.push_back(Edge::canonical(rng.below(n), rng.below(n)));
    g.neg.push_back(Edge::canonical(rng.below(n), rng.below(n)));
  }
  return g;
}

/// sum(x * c) for a fixed random c: a scalar that exercises every output entry.
inline Tensor probe(Tape& tape, const Tensor& x, std::uint64_t seed) {
  linkbench::Rng rng(seed);
  std::vector<double> c(x.size());
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  return ad::sum(tape, ad::mul(tape, x, Tensor::constant(x.shape(), std::move(c))));
}

inline Result run(std::string name, double limit, const fdcheck::LossFn& f, std::vector<Tensor> params) {
  const auto rep = fdcheck::check(f, std::move(params));
  return {std::move(name), rep.max_rel_error, limit, rep.checked};
}

inline std::vector<Result> layer_checks(std::uint64_t seed) {
  linkbench::Rng rng(seed);
  const auto g = random_instance(9, 4, rng);
  const auto adj = std::make_shared<const SparseMatrix>(normalize_adjacency(g.edges, g.n));
  const auto mean_op = std::make_shared<const SparseMatrix>(mean_neighbor_operator(g.edges, g.n));
  const auto msgs = message_edges_with_self_loops(g.edges, g.n);
  std::vector<Result> out;

  {
    auto h = fdcheck::random_param({g.n, 4}, rng), w = fdcheck::random_param({4, 3}, rng);
    out.push_back(run("gcn_layer", kLayerLimit,
                      [&](Tape& t, std::vector<Tensor>& p) { return probe(t, gcn_layer(t, adj, p[0], p[1], true), 1); },
                      {h, w}));
  }
  {
    auto h = fdcheck::random_param({g.n, 4}, rng);
    auto ws = fdcheck::random_param({4, 3}, rng), wn = fdcheck::random_param({4, 3}, rng);
    out.push_back(run("sage_layer", kLayerLimit,
                      [&](Tape& t, std::vector<Tensor>& p) {
                        return probe(t, sage_layer(t, mean_op, p[0], p[1], p[2], true), 2);
                      },
                      {h, ws, wn}));
  }
  for (HeadMerge merge : {HeadMerge::concat, HeadMerge::mean}) {
    auto h = fdcheck::random_param({g.n, 4}, rng);
    std::vector<Tensor> params{h};
    for (int k = 0; k < 2; ++k) {
      params.push_back(fdcheck::random_param({4, 3}, rng));
      params.push_back(fdcheck::random_param({6, 1}, rng));
    }
    out.push_back(run(merge == HeadMerge::concat ? "gat_layer (concat)" : "gat_layer (mean)", kLayerLimit,
                      [&, merge](Tape& t, std::vector<Tensor>& p) {
                        linkbench::Rng unused(0);
                        std::vector<GatHead> heads{{p[1], p[2]}, {p[3], p[4]}};
                        return probe(t, gat_layer(t, msgs, p[0], heads, 0.0, 0.2, false, unused, merge), 3);
                      },
                      params));
  }
  {
    auto w0 = fdcheck::random_param({4, 5}, rng), wm = fdcheck::random_param({5, 3}, rng),
         ws = fdcheck::random_param({5, 3}, rng);
    out.push_back(run("vgae_encode", kLayerLimit,
                      [&](Tape& t, std::vector<Tensor>& p) {
                        auto e = vgae_encode(t, adj, NodeInput(g.features), p[0], p[1], p[2]);
                        return ad::add(t, probe(t, e.mu, 4), probe(t, e.logsigma, 5));
                      },
                      {w0, wm, ws}));
  }
  {
    auto mu = fdcheck::random_param({g.n, 3}, rng), ls = fdcheck::random_param({g.n, 3}, rng, -1.0, 0.5);
    out.push_back(run("reparameterize", kLayerLimit,
                      [&](Tape& t, std::vector<Tensor>& p) {
                        linkbench::Rng eps(6);
                        return probe(t, reparameterize(t, p[0], p[1], eps, true), 6);
                      },
                      {mu, ls}));
  }
  {
    auto z = fdcheck::random_param({g.n, 3}, rng);
    out.push_back(run("decode_edges", kLayerLimit,
                      [&](Tape& t, std::vector<Tensor>& p) { return probe(t, decode_edges(t, p[0], g.pos), 7); },
                      {z}));
  }
  {
    auto pl = fdcheck::random_param({6}, rng, -4, 4), nl = fdcheck::random_param({6}, rng, -4, 4);
    out.push_back(run("bce_link_loss", kLayerLimit,
                      [](Tape& t, std::vector<Tensor>& p) { return bce_link_loss(t, p[0], p[1]); }, {pl, nl}));
  }
  {
    auto mu = fdcheck::random_param({g.n, 3}, rng), ls = fdcheck::random_param({g.n, 3}, rng);
    out.push_back(run("kl_to_standard_normal", kLayerLimit,
                      [](Tape& t, std::vector<Tensor>& p) { return kl_to_standard_normal(t, p[0], p[1]); },
                      {mu, ls}));
  }
  {
    auto pl = fdcheck::random_param({6}, rng, -3, 3), nl = fdcheck::random_param({6}, rng, -3, 3);
    auto mu = fdcheck::random_param({6, 2}, rng), ls = fdcheck::random_param({6, 2}, rng);
    out.push_back(run("elbo_loss", kLayerLimit,
                      [](Tape& t, std::vector<Tensor>& p) { return elbo_loss(t, p[0], p[1], p[2], p[3], 1.0 / 6.0); },
                      {pl, nl, mu, ls}));
  }
  {
    auto z = fdcheck::random_param({g.n, 3}, rng);
    EdgeList neg2;
    for (std::size_t i = 0; i < 2 * g.pos.size(); ++i) neg2.push_back(Edge::canonical(rng.below(g.n), rng.below(g.n)));
    out.push_back(run("sage_unsup_loss", kLayerLimit,
                      [&](Tape& t, std::vector<Tensor>& p) { return sage_unsup_loss(t, p[0], g.pos, neg2, 2); }, {z}));
  }
  return out;
}

/// Whole-model training losses on a 10-node graph with 4-dim features,
/// including the training-mode dropout and reparameterization paths (their
/// randomness is replayed from a fixed seed on every evaluation).
inline std::vector<Result> model_checks(std::uint64_t seed) {
  linkbench::Rng rng(seed);
  const auto g = random_instance(10, 4, rng);
  std::vector<Result> out;
  for (ModelKind kind : {ModelKind::gcn, ModelKind::sage, ModelKind::gat, ModelKind::vgae}) {
    ModelConfig cfg = default_model_config(kind, 4);
    switch (kind) {
      case ModelKind::gcn: cfg.layer_dims = {4, 6, 5}; break;
      case ModelKind::sage: cfg.layer_dims = {4, 5, 4}; break;
      case ModelKind::gat:
        cfg.layer_dims = {4, 3, 4};
        cfg.heads = {2, 1};
        cfg.dropout = 0.3;
        break;
      case ModelKind::vgae: cfg.layer_dims = {4, 5, 3}; break;
    }
    const GraphInputs in = prepare_inputs(kind, g.features, g.edges);
    linkbench::Rng init(seed + 1);
    const ModelParams params = init_params(cfg, init);
    std::vector<std::string> names;
    for (const auto& [n, t] : params) names.push_back(n);
    out.push_back(run(to_string(kind) + " model loss", kModelLimit,
                      [&, cfg, names](Tape& t, std::vector<Tensor>& p) {
                        ModelParams mp;
                        for (std::size_t i = 0; i < p.size(); ++i) mp.add(names[i], p[i]);
                        linkbench::Rng noise(99);
                        const Encoded e = forward(t, cfg, mp, in, true, noise);
                        Tensor pl = decode_edges(t, e.z, g.pos), nl = decode_edges(t, e.z, g.neg);
                        if (e.vgae) return elbo_loss(t, pl, nl, e.vgae->mu, e.vgae->logsigma, 0.1);
                        return bce_link_loss(t, pl, nl);
                      },
                      params.tensors()));
  }
  return out;
}

}  // namespace gradsuite
