#pragma once

// Graph encoders for link prediction and the shared inner-product decoder.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "linkbench/autodiff.hpp"
#include "linkbench/graph_data.hpp"
#include "linkbench/rng.hpp"
#include "linkbench/sparse.hpp"

namespace linkbench {

enum class ModelKind { gcn, sage, gat, vgae };

std::string to_string(ModelKind k);
/// Throws ConfigError for unknown names.
ModelKind parse_model_kind(const std::string& name);

enum class Activation { relu, elu };

/// Input feature preprocessing. `automatic` resolves per model: row sums
/// normalized for gcn, sage and gat, raw features for vgae.
enum class FeatureNorm { automatic, none, row };

FeatureNorm resolve_feature_norm(FeatureNorm requested, ModelKind kind);
std::string to_string(FeatureNorm f);
FeatureNorm parse_feature_norm(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::gcn;
  /// Input width followed by one entry per layer. For vgae: [F, hidden, latent].
  std::vector<std::size_t> layer_dims;
  /// gat only: heads per layer (the first concatenated, the last averaged).
  std::vector<std::size_t> heads;
  double dropout = 0.0;  // gat input and attention dropout
  double leaky_slope = 0.2;
  Activation hidden_activation = Activation::relu;

  std::size_t output_dim() const;
};

/// Standard two-layer configurations: gcn [F,128,64], sage [F,64,64],
/// gat 8x8 then 1x16 with dropout 0.6, vgae [F,32,16].
ModelConfig default_model_config(ModelKind kind, std::size_t num_features);

/// Throws ConfigError when dims/heads/dropout are inconsistent.
void validate(const ModelConfig& cfg);

/// Ordered named parameters.
class ModelParams {
 public:
  void add(std::string name, ad::Tensor t) { entries_.emplace_back(std::move(name), std::move(t)); }
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  std::vector<ad::Tensor> tensors() const;
  std::size_t count_scalars() const;

 private:
  std::vector<std::pair<std::string, ad::Tensor>> entries_;
};

/// Glorot-uniform parameters named layer<l>.w, layer<l>.w_self/.w_neigh,
/// layer<l>.head<h>.w/.a, or vgae.w0/.w_mu/.w_logsigma.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

/// Throws ContractError unless `params` has exactly the shapes `cfg` implies.
void check_params(const ModelConfig& cfg, const ModelParams& params);

/// Layer input: constant sparse node features or a dense tensor.
class NodeInput {
 public:
  NodeInput(ad::Tensor dense) : dense_(std::move(dense)) {}  // NOLINT: implicit by design
  NodeInput(ad::SparseRef sparse) : sparse_(std::move(sparse)) {}  // NOLINT

  bool is_sparse() const { return sparse_ != nullptr; }
  const ad::SparseRef& sparse() const { return sparse_; }
  const ad::Tensor& dense() const { return dense_; }
  std::size_t rows() const;
  std::size_t cols() const;

  /// h . w
  ad::Tensor times(ad::Tape& tape, const ad::Tensor& w) const;
  /// Training-time dropout; identity otherwise.
  NodeInput dropped(ad::Tape& tape, double rate, bool training, Rng& rng) const;

 private:
  ad::Tensor dense_;
  ad::SparseRef sparse_;
};

/// Graph operators derived from the message-passing (training) edges.
struct GraphInputs {
  std::size_t num_nodes = 0;
  ad::SparseRef features;  // N x F
  ad::SparseRef norm_adj;  // gcn, vgae
  ad::SparseRef mean_op;   // sage
  std::shared_ptr<const MessageEdges> messages;  // gat
};

GraphInputs prepare_inputs(ModelKind kind, const ad::Tensor& features, const EdgeList& message_edges);

/// act(adj . h . w)
ad::Tensor gcn_layer(ad::Tape& tape, const SparseMatrix& adj, const NodeInput& h, const ad::Tensor& w,
                     bool activation);
ad::Tensor gcn_layer(ad::Tape& tape, const ad::SparseRef& adj, const NodeInput& h, const ad::Tensor& w,
                     bool activation);

/// Row-normalized act(h . w_self + mean_neighbors(h) . w_neigh).
ad::Tensor sage_layer(ad::Tape& tape, const ad::SparseRef& mean_op, const NodeInput& h, const ad::Tensor& w_self,
                      const ad::Tensor& w_neigh, bool activation);

struct GatHead {
  ad::Tensor w;  // din x dout
  ad::Tensor a;  // 2*dout x 1: destination half, then source half
};

enum class HeadMerge { concat, mean };

/// Multi-head attention over `edges` (sorted by destination, one self-loop
/// per node). `alpha_out`, when given, receives each head's coefficients.
ad::Tensor gat_layer(ad::Tape& tape, const MessageEdges& edges, const NodeInput& h, const std::vector<GatHead>& heads,
                     double dropout, double leaky_slope, bool training, Rng& rng, HeadMerge merge,
                     std::vector<ad::Tensor>* alpha_out = nullptr);

struct VgaeOutput {
  ad::Tensor mu;
  ad::Tensor logsigma;
};

VgaeOutput vgae_encode(ad::Tape& tape, const ad::SparseRef& adj, const NodeInput& x, const ad::Tensor& w0,
                       const ad::Tensor& w_mu, const ad::Tensor& w_logsigma);

/// mu + exp(logsigma) * eps when training, mu otherwise.
ad::Tensor reparameterize(ad::Tape& tape, const ad::Tensor& mu, const ad::Tensor& logsigma, Rng& rng, bool training);

/// Logit <z_u, z_v> per pair.
ad::Tensor decode_edges(ad::Tape& tape, const ad::Tensor& z, const EdgeList& pairs);

struct Encoded {
  ad::Tensor z;  // reparameterized sample for vgae in training, else the embedding
  std::optional<VgaeOutput> vgae;
};

Encoded forward(ad::Tape& tape, const ModelConfig& cfg, const ModelParams& params, const GraphInputs& in,
                bool training, Rng& rng);

/// Binary named-tensor container: "LBNT" magic, u32 version, u64 count, then
/// per tensor the name, rank, dims and row-major float64 payload (little endian).
void save_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, ad::Tensor>>& tensors);
std::vector<std::pair<std::string, ad::Tensor>> load_tensors(const std::filesystem::path& path);

void save_params(const std::filesystem::path& path, const ModelParams& params);
/// Loaded tensors are parameters (requires_grad).
ModelParams load_params(const std::filesystem::path& path);

}  // namespace linkbench
