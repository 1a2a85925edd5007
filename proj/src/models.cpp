#include "linkbench/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "linkbench/error.hpp"

namespace linkbench {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::sage: return "sage";
    case ModelKind::gat: return "gat";
    case ModelKind::vgae: return "vgae";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "gcn") return ModelKind::gcn;
  if (name == "sage" || name == "graphsage") return ModelKind::sage;
  if (name == "gat") return ModelKind::gat;
  if (name == "vgae") return ModelKind::vgae;
  throw ConfigError("unknown model '" + name + "' (expected gcn, sage, gat or vgae)");
}

FeatureNorm resolve_feature_norm(FeatureNorm requested, ModelKind kind) {
  if (requested != FeatureNorm::automatic) return requested;
  return kind == ModelKind::vgae ? FeatureNorm::none : FeatureNorm::row;
}

std::string to_string(FeatureNorm f) {
  switch (f) {
    case FeatureNorm::automatic: return "auto";
    case FeatureNorm::none: return "none";
    case FeatureNorm::row: return "row";
  }
  return "?";
}

FeatureNorm parse_feature_norm(const std::string& name) {
  if (name == "auto") return FeatureNorm::automatic;
  if (name == "none" || name == "raw") return FeatureNorm::none;
  if (name == "row") return FeatureNorm::row;
  throw ConfigError("unknown feature normalization '" + name + "' (expected auto, none or row)");
}

std::size_t ModelConfig::output_dim() const { return layer_dims.empty() ? 0 : layer_dims.back(); }

ModelConfig default_model_config(ModelKind kind, std::size_t num_features) {
  ModelConfig c;
  c.kind = kind;
  switch (kind) {
    case ModelKind::gcn: c.layer_dims = {num_features, 128, 64}; break;
    case ModelKind::sage: c.layer_dims = {num_features, 64, 64}; break;
    case ModelKind::gat:
      c.layer_dims = {num_features, 8, 16};
      c.heads = {8, 1};
      c.dropout = 0.6;
      break;
    case ModelKind::vgae: c.layer_dims = {num_features, 32, 16}; break;
  }
  return c;
}

void validate(const ModelConfig& cfg) {
  if (cfg.layer_dims.size() < 2) throw ConfigError("model needs an input width and at least one layer");
  for (auto d : cfg.layer_dims) {
    if (d == 0) throw ConfigError("layer widths must be positive");
  }
  if (cfg.kind == ModelKind::vgae && cfg.layer_dims.size() != 3) {
    throw ConfigError("vgae takes exactly [input, hidden, latent] widths");
  }
  if (cfg.kind == ModelKind::gat) {
    if (cfg.heads.size() != cfg.layer_dims.size() - 1) throw ConfigError("gat needs one head count per layer");
    for (auto h : cfg.heads) {
      if (h == 0) throw ConfigError("gat head counts must be positive");
    }
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

namespace {

std::vector<std::pair<std::string, Shape>> expected_shapes(const ModelConfig& cfg) {
  validate(cfg);
  std::vector<std::pair<std::string, Shape>> out;
  const auto& d = cfg.layer_dims;
  switch (cfg.kind) {
    case ModelKind::gcn:
      for (std::size_t l = 0; l + 1 < d.size(); ++l) out.push_back({"layer" + std::to_string(l + 1) + ".w", {d[l], d[l + 1]}});
      break;
    case ModelKind::sage:
      for (std::size_t l = 0; l + 1 < d.size(); ++l) {
        const std::string p = "layer" + std::to_string(l + 1);
        out.push_back({p + ".w_self", {d[l], d[l + 1]}});
        out.push_back({p + ".w_neigh", {d[l], d[l + 1]}});
      }
      break;
    case ModelKind::gat: {
      std::size_t in = d[0];
      for (std::size_t l = 0; l + 1 < d.size(); ++l) {
        for (std::size_t h = 0; h < cfg.heads[l]; ++h) {
          const std::string p = "layer" + std::to_string(l + 1) + ".head" + std::to_string(h + 1);
          out.push_back({p + ".w", {in, d[l + 1]}});
          out.push_back({p + ".a", {2 * d[l + 1], 1}});
        }
        in = cfg.heads[l] * d[l + 1];
      }
      break;
    }
    case ModelKind::vgae:
      out.push_back({"vgae.w0", {d[0], d[1]}});
      out.push_back({"vgae.w_mu", {d[1], d[2]}});
      out.push_back({"vgae.w_logsigma", {d[1], d[2]}});
      break;
  }
  return out;
}

}  // namespace

const Tensor& ModelParams::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ContractError("model parameter '" + name + "' missing");
}

bool ModelParams::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ModelParams::count_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  ModelParams p;
  for (auto& [name, shape] : expected_shapes(cfg)) {
    const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    std::vector<double> v(shape[0] * shape[1]);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    p.add(name, Tensor::parameter(shape, std::move(v)));
  }
  return p;
}

void check_params(const ModelConfig& cfg, const ModelParams& params) {
  const auto want = expected_shapes(cfg);
  if (want.size() != params.size()) {
    throw ContractError("model expects " + std::to_string(want.size()) + " parameter tensors, got " +
                        std::to_string(params.size()));
  }
  for (const auto& [name, shape] : want) {
    const auto& t = params.get(name);
    if (t.shape() != shape) {
      throw ContractError("parameter " + name + " has shape " + ad::shape_string(t.shape()) + ", expected " +
                          ad::shape_string(shape));
    }
  }
}

std::size_t NodeInput::rows() const { return sparse_ ? sparse_->rows() : dense_.rows(); }
std::size_t NodeInput::cols() const { return sparse_ ? sparse_->cols() : dense_.cols(); }

Tensor NodeInput::times(Tape& tape, const Tensor& w) const {
  return sparse_ ? ad::spmm(tape, sparse_, w) : ad::matmul(tape, dense_, w);
}

NodeInput NodeInput::dropped(Tape& tape, double rate, bool training, Rng& rng) const {
  if (!training || rate == 0.0) return *this;
  if (sparse_) return NodeInput(std::make_shared<const SparseMatrix>(ad::dropout(*sparse_, rate, rng)));
  return NodeInput(ad::dropout(tape, dense_, rate, training, rng));
}

GraphInputs prepare_inputs(ModelKind kind, const Tensor& features, const EdgeList& message_edges) {
  GraphInputs in;
  in.num_nodes = features.rows();
  in.features = std::make_shared<const SparseMatrix>(
      SparseMatrix::from_dense(features.rows(), features.cols(), features.value()));
  switch (kind) {
    case ModelKind::gcn:
    case ModelKind::vgae:
      in.norm_adj = std::make_shared<const SparseMatrix>(normalize_adjacency(message_edges, in.num_nodes));
      break;
    case ModelKind::sage:
      in.mean_op = std::make_shared<const SparseMatrix>(mean_neighbor_operator(message_edges, in.num_nodes));
      break;
    case ModelKind::gat:
      in.messages = std::make_shared<const MessageEdges>(message_edges_with_self_loops(message_edges, in.num_nodes));
      break;
  }
  return in;
}

Tensor gcn_layer(Tape& tape, const ad::SparseRef& adj, const NodeInput& h, const Tensor& w, bool activation) {
  if (adj->cols() != h.rows()) throw ShapeError("gcn_layer: adjacency and feature row counts differ");
  if (h.cols() != w.rows()) throw ShapeError("gcn_layer: weight rows must equal the input width");
  Tensor out = ad::spmm(tape, adj, h.times(tape, w));
  return activation ? ad::relu(tape, out) : out;
}

Tensor gcn_layer(Tape& tape, const SparseMatrix& adj, const NodeInput& h, const Tensor& w, bool activation) {
  return gcn_layer(tape, std::make_shared<const SparseMatrix>(adj), h, w, activation);
}

Tensor sage_layer(Tape& tape, const ad::SparseRef& mean_op, const NodeInput& h, const Tensor& w_self,
                  const Tensor& w_neigh, bool activation) {
  if (mean_op->cols() != h.rows()) throw ShapeError("sage_layer: operator and feature row counts differ");
  if (h.cols() != w_self.rows() || w_self.shape() != w_neigh.shape()) {
    throw ShapeError("sage_layer: weight shapes do not match the input width");
  }
  // mean(h) . w_neigh == mean(h . w_neigh); the right side keeps the sparse
  // product narrow.
  Tensor out = ad::add(tape, h.times(tape, w_self), ad::spmm(tape, mean_op, h.times(tape, w_neigh)));
  if (activation) out = ad::relu(tape, out);
  return ad::rows_l2_normalize(tape, out);
}

Tensor gat_layer(Tape& tape, const MessageEdges& edges, const NodeInput& h, const std::vector<GatHead>& heads,
                 double dropout, double leaky_slope, bool training, Rng& rng, HeadMerge merge,
                 std::vector<Tensor>* alpha_out) {
  const std::size_t n = edges.num_nodes;
  if (h.rows() != n) throw ShapeError("gat_layer: feature rows differ from node count");
  if (heads.empty()) throw ContractError("gat_layer: no attention heads");
  if (edges.src.size() != edges.dst.size()) throw ShapeError("gat_layer: src/dst lengths differ");
  // Every node must own a non-empty softmax segment.
  std::size_t expect = 0;
  for (std::size_t i = 0; i < edges.dst.size(); ++i) {
    if (edges.dst[i] == expect) {
      ++expect;
    } else if (edges.dst[i] > expect || (i > 0 && edges.dst[i] < edges.dst[i - 1])) {
      break;
    }
  }
  if (expect != n) {
    throw ContractError("gat_layer: node " + std::to_string(expect) +
                        " has no incoming edge (self-loops required, edges sorted by destination)");
  }

  const NodeInput x = h.dropped(tape, dropout, training, rng);
  std::vector<Tensor> outs;
  outs.reserve(heads.size());
  for (const auto& head : heads) {
    const std::size_t d = head.w.cols();
    if (head.w.rows() != x.cols() || head.a.shape() != Shape{2 * d, 1}) {
      throw ShapeError("gat_layer: head weights do not match the input width");
    }
    Tensor wh = x.times(tape, head.w);
    Tensor s_dst = ad::matmul(tape, wh, ad::slice_rows(tape, head.a, 0, d));
    Tensor s_src = ad::matmul(tape, wh, ad::slice_rows(tape, head.a, d, 2 * d));
    Tensor e = ad::add(tape, ad::gather_rows(tape, s_dst, edges.dst), ad::gather_rows(tape, s_src, edges.src));
    Tensor alpha = ad::segment_softmax(tape, ad::leaky_relu(tape, e, leaky_slope), edges.dst);
    if (alpha_out) alpha_out->push_back(alpha);
    alpha = ad::dropout(tape, alpha, dropout, training, rng);
    outs.push_back(ad::edge_aggregate(tape, alpha, wh, edges.src, edges.dst, n));
  }
  if (merge == HeadMerge::concat) return outs.size() == 1 ? outs.front() : ad::concat_cols(tape, outs);
  Tensor acc = outs.front();
  for (std::size_t i = 1; i < outs.size(); ++i) acc = ad::add(tape, acc, outs[i]);
  return outs.size() == 1 ? acc : ad::scale(tape, acc, 1.0 / static_cast<double>(outs.size()));
}

VgaeOutput vgae_encode(Tape& tape, const ad::SparseRef& adj, const NodeInput& x, const Tensor& w0, const Tensor& w_mu,
                       const Tensor& w_logsigma) {
  if (w_mu.shape() != w_logsigma.shape()) throw ShapeError("vgae_encode: mu and logsigma heads differ in shape");
  Tensor hidden = gcn_layer(tape, adj, x, w0, true);
  return {gcn_layer(tape, adj, hidden, w_mu, false), gcn_layer(tape, adj, hidden, w_logsigma, false)};
}

Tensor reparameterize(Tape& tape, const Tensor& mu, const Tensor& logsigma, Rng& rng, bool training) {
  if (mu.shape() != logsigma.shape()) throw ShapeError("reparameterize: mu and logsigma shapes differ");
  if (!training) return mu;
  std::vector<double> eps(mu.size());
  for (auto& e : eps) e = rng.normal();
  return ad::add(tape, mu, ad::mul(tape, ad::exp(tape, logsigma), Tensor::constant(mu.shape(), std::move(eps))));
}

Tensor decode_edges(Tape& tape, const Tensor& z, const EdgeList& pairs) {
  if (z.rank() != 2) throw ShapeError("decode_edges: embedding must be a matrix");
  std::vector<std::size_t> u(pairs.size()), v(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].u >= z.rows() || pairs[i].v >= z.rows()) {
      throw IndexError("decode_edges: pair (" + std::to_string(pairs[i].u) + ", " + std::to_string(pairs[i].v) +
                       ") outside " + std::to_string(z.rows()) + " nodes");
    }
    u[i] = pairs[i].u;
    v[i] = pairs[i].v;
  }
  return ad::sum_rows(tape, ad::mul(tape, ad::gather_rows(tape, z, u), ad::gather_rows(tape, z, v)));
}

Encoded forward(Tape& tape, const ModelConfig& cfg, const ModelParams& params, const GraphInputs& in, bool training,
                Rng& rng) {
  check_params(cfg, params);
  if (!in.features || in.features->cols() != cfg.layer_dims.front()) {
    throw ContractError("forward: feature width does not match the model input width");
  }
  const std::size_t layers = cfg.layer_dims.size() - 1;
  NodeInput h(in.features);
  Encoded out;
  switch (cfg.kind) {
    case ModelKind::gcn: {
      if (!in.norm_adj) throw ContractError("forward: gcn needs the normalized adjacency");
      Tensor t;
      for (std::size_t l = 0; l < layers; ++l) {
        t = gcn_layer(tape, in.norm_adj, h, params.get("layer" + std::to_string(l + 1) + ".w"), l + 1 < layers);
        h = NodeInput(t);
      }
      out.z = t;
      break;
    }
    case ModelKind::sage: {
      if (!in.mean_op) throw ContractError("forward: sage needs the mean-neighbour operator");
      Tensor t;
      for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = "layer" + std::to_string(l + 1);
        t = sage_layer(tape, in.mean_op, h, params.get(p + ".w_self"), params.get(p + ".w_neigh"), l + 1 < layers);
        h = NodeInput(t);
      }
      out.z = t;
      break;
    }
    case ModelKind::gat: {
      if (!in.messages) throw ContractError("forward: gat needs message edges");
      Tensor t;
      for (std::size_t l = 0; l < layers; ++l) {
        std::vector<GatHead> heads;
        for (std::size_t k = 0; k < cfg.heads[l]; ++k) {
          const std::string p = "layer" + std::to_string(l + 1) + ".head" + std::to_string(k + 1);
          heads.push_back({params.get(p + ".w"), params.get(p + ".a")});
        }
        const bool last = l + 1 == layers;
        t = gat_layer(tape, *in.messages, h, heads, cfg.dropout, cfg.leaky_slope, training, rng,
                      last ? HeadMerge::mean : HeadMerge::concat);
        if (!last) t = cfg.hidden_activation == Activation::elu ? ad::elu(tape, t) : ad::relu(tape, t);
        h = NodeInput(t);
      }
      out.z = t;
      break;
    }
    case ModelKind::vgae: {
      if (!in.norm_adj) throw ContractError("forward: vgae needs the normalized adjacency");
      auto enc = vgae_encode(tape, in.norm_adj, h, params.get("vgae.w0"), params.get("vgae.w_mu"),
                             params.get("vgae.w_logsigma"));
      out.z = reparameterize(tape, enc.mu, enc.logsigma, rng, training);
      out.vgae = std::move(enc);
      break;
    }
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'L', 'B', 'N', 'T'};
constexpr std::uint32_t kTensorFormatVersion = 1;

template <typename T>
void put(std::ostream& o, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  o.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw DataError(path.string() + ": truncated tensor file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw FileError("cannot write " + path.string());
  o.write(kMagic, 4);
  put<std::uint32_t>(o, kTensorFormatVersion);
  put<std::uint64_t>(o, tensors.size());
  for (const auto& [name, t] : tensors) {
    put<std::uint64_t>(o, name.size());
    o.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(o, t.rank());
    for (auto d : t.shape()) put<std::uint64_t>(o, d);
    for (double v : t.value()) put<double>(o, v);
  }
  if (!o) throw FileError("write failed for " + path.string());
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path.string() + ": not a tensor file");
  const auto version = take<std::uint32_t>(in, path);
  if (version != kTensorFormatVersion) {
    throw DataError(path.string() + ": unsupported tensor format version " + std::to_string(version));
  }
  const auto count = take<std::uint64_t>(in, path);
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = take<std::uint64_t>(in, path);
    if (len > 4096) throw DataError(path.string() + ": implausible tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw DataError(path.string() + ": truncated name");
    const auto rank = take<std::uint64_t>(in, path);
    if (rank > 8) throw DataError(path.string() + ": implausible tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = take<std::uint64_t>(in, path);
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = take<double>(in, path);
    out.emplace_back(std::move(name), Tensor::constant(std::move(shape), std::move(v)));
  }
  return out;
}

void save_params(const std::filesystem::path& path, const ModelParams& params) {
  std::vector<std::pair<std::string, Tensor>> t(params.begin(), params.end());
  save_tensors(path, t);
}

ModelParams load_params(const std::filesystem::path& path) {
  ModelParams p;
  for (auto& [name, t] : load_tensors(path)) {
    p.add(name, Tensor::parameter(t.shape(), std::vector<double>(t.value().begin(), t.value().end())));
  }
  return p;
}

}  // namespace linkbench
