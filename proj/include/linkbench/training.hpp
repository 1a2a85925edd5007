#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "linkbench/autodiff.hpp"
#include "linkbench/graph_data.hpp"
#include "linkbench/models.hpp"

namespace linkbench {

/// Mean binary cross-entropy over positives (label 1) and an equal number of
/// negatives (label 0), in softplus form.
ad::Tensor bce_link_loss(ad::Tape& tape, const ad::Tensor& pos_logits, const ad::Tensor& neg_logits);

/// (1/N) sum -1/2 (1 + 2 logsigma - mu^2 - exp(2 logsigma)) over an N x d posterior.
ad::Tensor kl_to_standard_normal(ad::Tape& tape, const ad::Tensor& mu, const ad::Tensor& logsigma);

/// bce_link_loss + kl_weight * kl_to_standard_normal.
ad::Tensor elbo_loss(ad::Tape& tape, const ad::Tensor& pos_logits, const ad::Tensor& neg_logits, const ad::Tensor& mu,
                     const ad::Tensor& logsigma, double kl_weight);

/// Unsupervised GraphSAGE objective averaged over positives:
/// -log s(z_u.z_v) - Q * E_q log s(-z_u.z_q). Negatives come in groups of Q,
/// group i belonging to positive i.
ad::Tensor sage_unsup_loss(ad::Tape& tape, const ad::Tensor& z, const EdgeList& pos, const EdgeList& neg,
                           std::size_t q);

struct AdamState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam(const ModelParams& params, double lr);

/// One bias-corrected Adam update from the accumulated gradients. Throws
/// ContractError if any parameter has no gradient.
void adam_step(ModelParams& params, AdamState& state);

enum class LossKind { bce, elbo, sage_unsup };

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 0.01;
  LossKind loss = LossKind::bce;  // elbo is used for vgae whatever this says
  /// VGAE KL weight; unset means 1/N.
  std::optional<double> kl_weight;
  std::size_t sage_negatives = 1;  // Q for sage_unsup
  /// Score validation AUC each epoch (logging only, never used for selection).
  bool track_validation = true;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_auc = 0.0;  // NaN when not tracked
};

struct TrainResult {
  ModelParams params;
  ad::Tensor embedding;  // eval-mode encoder output (mu for vgae)
  std::vector<EpochRecord> trace;
};

/// Full-batch training. Each epoch draws |train_pos| fresh negatives that
/// avoid every dataset edge. Deterministic in run_seed. Throws
/// DivergenceError on a non-finite loss.
TrainResult train_run(const GraphDataset& g, const EdgeSplit& split, const GraphInputs& inputs,
                      const ModelConfig& model, const TrainConfig& train, std::uint64_t run_seed);

/// Convenience overload that builds the graph inputs from split.train_pos.
TrainResult train_run(const GraphDataset& g, const EdgeSplit& split, const ModelConfig& model,
                      const TrainConfig& train, std::uint64_t run_seed);

/// Eval-mode embedding for given parameters.
ad::Tensor embed(const ModelConfig& model, const ModelParams& params, const GraphInputs& inputs);

/// CSV with header epoch,train_loss,val_auc.
void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& trace);

}  // namespace linkbench
