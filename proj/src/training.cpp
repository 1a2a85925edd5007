#include "linkbench/training.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fmt/os.h>
#include <limits>

#include "linkbench/error.hpp"
#include "linkbench/log.hpp"
#include "linkbench/metrics.hpp"

namespace linkbench {

using ad::Tape;
using ad::Tensor;

Tensor bce_link_loss(Tape& tape, const Tensor& pos_logits, const Tensor& neg_logits) {
  if (pos_logits.size() == 0 || neg_logits.size() == 0) throw ContractError("bce_link_loss: empty logits");
  if (pos_logits.size() != neg_logits.size()) {
    throw ContractError("bce_link_loss: " + std::to_string(pos_logits.size()) + " positives vs " +
                        std::to_string(neg_logits.size()) + " negatives");
  }
  // -log s(x) = softplus(-x); -log(1 - s(x)) = softplus(x).
  Tensor total = ad::add(tape, ad::sum(tape, ad::softplus(tape, ad::neg(tape, pos_logits))),
                         ad::sum(tape, ad::softplus(tape, neg_logits)));
  return ad::scale(tape, total, 1.0 / static_cast<double>(pos_logits.size() + neg_logits.size()));
}

Tensor kl_to_standard_normal(Tape& tape, const Tensor& mu, const Tensor& logsigma) {
  if (mu.shape() != logsigma.shape() || mu.rank() != 2) {
    throw ShapeError("kl_to_standard_normal: mu and logsigma must be equal-shaped matrices");
  }
  // mu^2 + exp(2 ls) - 1 - 2 ls, which is exactly +0 at mu = ls = 0
  Tensor two_ls = ad::scale(tape, logsigma, 2.0);
  Tensor inner = ad::sub(tape, ad::add_scalar(tape, ad::add(tape, ad::mul(tape, mu, mu), ad::exp(tape, two_ls)), -1.0),
                         two_ls);
  return ad::scale(tape, ad::sum(tape, inner), 0.5 / static_cast<double>(mu.rows()));
}

Tensor elbo_loss(Tape& tape, const Tensor& pos_logits, const Tensor& neg_logits, const Tensor& mu,
                 const Tensor& logsigma, double kl_weight) {
  Tensor rec = bce_link_loss(tape, pos_logits, neg_logits);
  if (kl_weight == 0.0) return rec;
  return ad::add(tape, rec, ad::scale(tape, kl_to_standard_normal(tape, mu, logsigma), kl_weight));
}

Tensor sage_unsup_loss(Tape& tape, const Tensor& z, const EdgeList& pos, const EdgeList& neg, std::size_t q) {
  if (pos.empty() || q == 0) throw ContractError("sage_unsup_loss: need positives and Q >= 1");
  if (neg.size() != q * pos.size()) {
    throw ContractError("sage_unsup_loss: expected " + std::to_string(q * pos.size()) + " negatives (Q=" +
                        std::to_string(q) + "), got " + std::to_string(neg.size()));
  }
  // Q * mean over the group equals the plain sum over the group.
  Tensor p = ad::sum(tape, ad::softplus(tape, ad::neg(tape, decode_edges(tape, z, pos))));
  Tensor n = ad::sum(tape, ad::softplus(tape, decode_edges(tape, z, neg)));
  return ad::scale(tape, ad::add(tape, p, n), 1.0 / static_cast<double>(pos.size()));
}

AdamState make_adam(const ModelParams& params, double lr) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  AdamState s;
  s.lr = lr;
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, AdamState& state) {
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("adam_step: parameter " + name + " has no gradient");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    auto& value = t.mutable_value();
    const auto& g = t.mutable_grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    ++k;
  }
}

Tensor embed(const ModelConfig& model, const ModelParams& params, const GraphInputs& inputs) {
  Tape tape(false);
  Rng unused(0);
  const Encoded e = forward(tape, model, params, inputs, false, unused);
  // Detach from the parameter graph.
  return Tensor::constant(e.z.shape(), std::vector<double>(e.z.value().begin(), e.z.value().end()));
}

TrainResult train_run(const GraphDataset& g, const EdgeSplit& split, const GraphInputs& inputs,
                      const ModelConfig& model, const TrainConfig& train, std::uint64_t run_seed) {
  if (split.train_pos.empty()) throw ContractError("train_run: split has no training edges");
  if (!(train.lr > 0.0)) throw ConfigError("train_run: learning rate must be positive");
  Rng root(run_seed);
  Rng init_rng = root.split(1);
  Rng neg_rng = root.split(2);
  Rng model_rng = root.split(3);

  TrainResult out;
  out.params = init_params(model, init_rng);
  AdamState adam = make_adam(out.params, train.lr);
  const EdgeSet all_edges(g.num_nodes, g.edges);
  const double kl_weight = train.kl_weight.value_or(1.0 / static_cast<double>(g.num_nodes));
  const LossKind loss_kind = model.kind == ModelKind::vgae ? LossKind::elbo : train.loss;
  const std::size_t neg_per_pos = loss_kind == LossKind::sage_unsup ? train.sage_negatives : 1;

  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    const EdgeList neg = sample_negative_edges(g.num_nodes, neg_per_pos * split.train_pos.size(), all_edges, neg_rng);
    Tape tape;
    const Encoded enc = forward(tape, model, out.params, inputs, true, model_rng);
    Tensor loss;
    switch (loss_kind) {
      case LossKind::bce:
        loss = bce_link_loss(tape, decode_edges(tape, enc.z, split.train_pos), decode_edges(tape, enc.z, neg));
        break;
      case LossKind::elbo:
        if (!enc.vgae) throw ContractError("train_run: elbo loss needs a variational encoder");
        loss = elbo_loss(tape, decode_edges(tape, enc.z, split.train_pos), decode_edges(tape, enc.z, neg),
                         enc.vgae->mu, enc.vgae->logsigma, kl_weight);
        break;
      case LossKind::sage_unsup:
        loss = sage_unsup_loss(tape, enc.z, split.train_pos, neg, neg_per_pos);
        break;
    }
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw DivergenceError(fmt::format("{} on {}: loss became {} at epoch {}", to_string(model.kind), g.name, value,
                                        epoch));
    }
    for (auto& [name, t] : out.params) t.zero_grad();
    tape.backward(loss);
    adam_step(out.params, adam);

    EpochRecord rec{epoch, value, std::numeric_limits<double>::quiet_NaN()};
    if (train.track_validation && !split.val_pos.empty()) {
      rec.val_auc = evaluate_split(embed(model, out.params, inputs), split.val_pos, split.val_neg).auc;
    }
    log::debug("{}/{} epoch {:3d} loss {:.6f} val_auc {:.4f}", to_string(model.kind), g.name, epoch, value,
               rec.val_auc);
    out.trace.push_back(rec);
  }
  out.embedding = embed(model, out.params, inputs);
  for (double v : out.embedding.value()) {
    if (!std::isfinite(v)) throw DivergenceError(to_string(model.kind) + " on " + g.name + ": non-finite embedding");
  }
  return out;
}

TrainResult train_run(const GraphDataset& g, const EdgeSplit& split, const ModelConfig& model,
                      const TrainConfig& train, std::uint64_t run_seed) {
  return train_run(g, split, prepare_inputs(model.kind, g.features, split.train_pos), model, train, run_seed);
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& trace) {
  try {
    auto out = fmt::output_file(path.string());
    out.print("epoch,train_loss,val_auc\n");
    for (const auto& r : trace) out.print("{},{:.17g},{:.17g}\n", r.epoch, r.train_loss, r.val_auc);
  } catch (const std::system_error& e) {
    throw FileError("cannot write " + path.string() + ": " + e.what());
  }
}

}  // namespace linkbench
