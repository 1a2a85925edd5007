#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_set>
#include <vector>

#include "linkbench/autodiff.hpp"
#include "linkbench/rng.hpp"
#include "linkbench/sparse.hpp"

namespace linkbench {

/// Undirected pair stored canonically with u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;

  static Edge canonical(std::size_t a, std::size_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

using EdgeList = std::vector<Edge>;

/// Membership set over canonical pairs of an N-node graph.
class EdgeSet {
 public:
  explicit EdgeSet(std::size_t num_nodes) : n_(num_nodes) {}
  EdgeSet(std::size_t num_nodes, const EdgeList& edges);

  void insert(Edge e) { keys_.insert(key(e)); }
  bool contains(std::size_t a, std::size_t b) const { return keys_.count(key(Edge::canonical(a, b))) != 0; }
  bool contains(Edge e) const { return contains(e.u, e.v); }
  std::size_t size() const { return keys_.size(); }
  std::size_t num_nodes() const { return n_; }

 private:
  std::uint64_t key(Edge e) const { return static_cast<std::uint64_t>(e.u) * n_ + e.v; }
  std::size_t n_;
  std::unordered_set<std::uint64_t> keys_;
};

struct GraphDataset {
  std::string name;
  std::size_t num_nodes = 0;
  ad::Tensor features;  // N x F constant
  std::vector<int> labels;
  std::size_t num_classes = 0;
  EdgeList edges;  // canonical, deduplicated, sorted, no self-loops
  std::size_t raw_edge_records = 0;  // entries in the source files before canonicalization

  std::size_t num_features() const { return features.cols(); }
  double mean_degree() const { return num_nodes ? 2.0 * static_cast<double>(edges.size()) / num_nodes : 0.0; }
};

/// Throws DataError when any GraphDataset invariant fails.
void validate(const GraphDataset& g);

/// Cora, CiteSeer or PubMed from `dir`. Reads the Planetoid ind.<name>.* file
/// set; for cora, falls back to the LINQS cora.content / cora.cites pair when
/// the Planetoid files are absent.
GraphDataset load_planetoid(const std::string& name, const std::filesystem::path& dir);

/// Wiki-CS data.json (features, labels, links).
GraphDataset load_wikics(const std::filesystem::path& file);

/// Dispatch by name: cora/citeseer/pubmed under data_dir/<name>, wikics at
/// data_dir/wikics/data.json.
GraphDataset load_dataset(const std::string& name, const std::filesystem::path& data_dir);

struct EdgeSplit {
  std::string dataset;
  std::uint64_t seed = 0;
  double val_frac = 0.05;
  double test_frac = 0.10;
  EdgeList train_pos, val_pos, test_pos;
  EdgeList val_neg, test_neg;
};

inline constexpr double kDefaultValFrac = 0.05;
inline constexpr double kDefaultTestFrac = 0.10;

/// Uniform random partition of g.edges into test/val/train (floor sizes,
/// remainder to train) plus frozen evaluation negatives.
EdgeSplit split_edges(const GraphDataset& g, double val_frac, double test_frac, std::uint64_t seed);

/// `count` distinct non-self-loop pairs absent from `exclude`.
EdgeList sample_negative_edges(std::size_t num_nodes, std::size_t count, const EdgeSet& exclude, Rng& rng);

/// Each row divided by its sum; rows summing to zero are left as they are.
ad::Tensor row_normalize_features(const ad::Tensor& x);

/// D^-1/2 (A + I) D^-1/2 over both directions of `edges`.
SparseMatrix normalize_adjacency(const EdgeList& edges, std::size_t num_nodes);

/// Row i averages the neighbours of i (no self-loop); empty rows for isolated nodes.
SparseMatrix mean_neighbor_operator(const EdgeList& edges, std::size_t num_nodes);

/// Directed message edges src -> dst with one self-loop per node, sorted by
/// (dst, src). Used by the attention layer.
struct MessageEdges {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::size_t num_nodes = 0;
};
MessageEdges message_edges_with_self_loops(const EdgeList& edges, std::size_t num_nodes);

/// Text split format: a header naming dataset, seed and fractions, then one
/// `section <name> <count>` line per edge list followed by `u v` lines.
void write_split(std::ostream& out, const EdgeSplit& split);
EdgeSplit read_split(std::istream& in);
void save_split(const std::filesystem::path& path, const EdgeSplit& split);
EdgeSplit load_split(const std::filesystem::path& path);

}  // namespace linkbench
