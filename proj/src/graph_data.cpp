#include "linkbench/graph_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_map>

#include "linkbench/error.hpp"
#include "linkbench/log.hpp"
#include "linkbench/pickle.hpp"

namespace linkbench {

namespace fs = std::filesystem;

namespace {

// Link counts given in the public dataset descriptions. The canonical
// deduplicated counts of the distributed files differ; both are logged.
std::size_t documented_link_count(const std::string& name) {
  static const std::map<std::string, std::size_t> counts{
      {"cora", 5429}, {"citeseer", 4732}, {"pubmed", 44338}, {"wikics", 216213}};
  auto it = counts.find(name);
  return it == counts.end() ? 0 : it->second;
}

EdgeList canonicalize(std::vector<std::pair<std::size_t, std::size_t>> pairs) {
  EdgeList out;
  out.reserve(pairs.size());
  for (auto [a, b] : pairs) {
    if (a != b) out.push_back(Edge::canonical(a, b));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void log_edges(const GraphDataset& g) {
  log::info("{}: {} nodes, {} features, {} classes, {} source link records -> {} canonical undirected edges "
            "(documented: {})",
            g.name, g.num_nodes, g.num_features(), g.num_classes, g.raw_edge_records, g.edges.size(),
            documented_link_count(g.name));
}

GraphDataset load_linqs_cora(const fs::path& dir) {
  const fs::path content = dir / "cora.content";
  const fs::path cites = dir / "cora.cites";
  std::ifstream in(content);
  if (!in) throw DataError("cannot open " + content.string());

  GraphDataset g;
  g.name = "cora";
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> label_names;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.size() < 3) throw DataError(content.string() + ":" + std::to_string(lineno) + ": too few fields");
    if (width == 0) width = tok.size() - 2;
    if (tok.size() - 2 != width) throw DataError(content.string() + ":" + std::to_string(lineno) + ": ragged feature row");
    std::vector<double> row(width);
    for (std::size_t i = 0; i < width; ++i) {
      try {
        row[i] = std::stod(tok[i + 1]);
      } catch (const std::exception&) {
        throw DataError(content.string() + ":" + std::to_string(lineno) + ": bad feature value '" + tok[i + 1] + "'");
      }
    }
    if (!index.emplace(tok.front(), rows.size()).second) {
      throw DataError(content.string() + ":" + std::to_string(lineno) + ": duplicate paper id " + tok.front());
    }
    rows.push_back(std::move(row));
    label_names.push_back(tok.back());
  }
  if (rows.empty()) throw DataError(content.string() + ": no nodes");

  std::vector<std::string> classes(label_names);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  g.num_nodes = rows.size();
  g.num_classes = classes.size();
  for (const auto& l : label_names) {
    g.labels.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), l) - classes.begin()));
  }
  std::vector<double> feats;
  feats.reserve(g.num_nodes * width);
  for (const auto& r : rows) feats.insert(feats.end(), r.begin(), r.end());
  g.features = ad::Tensor::constant({g.num_nodes, width}, std::move(feats));

  std::ifstream cin(cites);
  if (!cin) throw DataError("cannot open " + cites.string());
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  lineno = 0;
  while (std::getline(cin, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a >> b)) continue;
    auto ia = index.find(a), ib = index.find(b);
    if (ia == index.end() || ib == index.end()) {
      throw DataError(cites.string() + ":" + std::to_string(lineno) + ": unknown paper id");
    }
    pairs.emplace_back(ia->second, ib->second);
  }
  g.raw_edge_records = pairs.size();
  g.edges = canonicalize(std::move(pairs));
  return g;
}

std::vector<std::int64_t> read_index_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::vector<std::int64_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(std::stoll(line));
    } catch (const std::exception&) {
      throw DataError(p.string() + ":" + std::to_string(lineno) + ": not an integer");
    }
  }
  return out;
}

// Mirrors the reference Planetoid assembly: stack allx with the test block,
// pad the test block to the full index range (CiteSeer has isolated test
// nodes missing from tx), then move test rows to their listed node ids.
GraphDataset load_planetoid_pickles(const std::string& name, const fs::path& dir) {
  auto file = [&](const std::string& part) { return dir / ("ind." + name + "." + part); };
  auto wrap = [&](const std::string& part, auto&& fn) {
    try {
      return fn(pickle::parse_file(file(part)));
    } catch (const DataError& e) {
      const std::string msg = e.what();
      if (msg.find(file(part).string()) != std::string::npos) throw;
      throw DataError(file(part).string() + ": " + msg);
    }
  };
  const SparseMatrix allx = wrap("allx", [](const pickle::Ref& r) { return pickle::to_csr(r); });
  const SparseMatrix tx = wrap("tx", [](const pickle::Ref& r) { return pickle::to_csr(r); });
  const pickle::NdArray ally = wrap("ally", [](const pickle::Ref& r) { return pickle::to_ndarray(r); });
  const pickle::NdArray ty = wrap("ty", [](const pickle::Ref& r) { return pickle::to_ndarray(r); });
  const auto adjacency = wrap("graph", [](const pickle::Ref& r) { return pickle::to_adjacency(r); });
  const auto test_index = read_index_file(file("test.index"));

  if (test_index.empty()) throw DataError(file("test.index").string() + ": empty");
  if (allx.cols() != tx.cols()) throw DataError(file("tx").string() + ": feature width differs from allx");
  if (ally.shape.size() != 2 || ty.shape.size() != 2 || ally.shape[1] != ty.shape[1]) {
    throw DataError(file("ty").string() + ": label arrays are not matching 2-D one-hot blocks");
  }
  if (ally.shape[0] != allx.rows() || ty.shape[0] != tx.rows() || tx.rows() != test_index.size()) {
    throw DataError(file("tx").string() + ": row counts of x/y/test.index blocks disagree");
  }

  std::vector<std::int64_t> sorted_test = test_index;
  std::sort(sorted_test.begin(), sorted_test.end());
  const std::int64_t lo = sorted_test.front(), hi = sorted_test.back();
  const std::size_t base = allx.rows();
  if (lo < 0 || static_cast<std::size_t>(lo) != base) {
    throw DataError(file("test.index").string() + ": smallest test index must equal the allx row count");
  }
  const std::size_t n = base + static_cast<std::size_t>(hi - lo + 1);
  const std::size_t f = allx.cols();
  const std::size_t c = ally.shape[1];

  // Stacked blocks, test rows placed at sorted positions.
  std::vector<double> stacked_x(n * f, 0.0);
  std::vector<double> stacked_y(n * c, 0.0);
  const auto allx_dense = allx.to_dense();
  std::copy(allx_dense.begin(), allx_dense.end(), stacked_x.begin());
  std::copy(ally.values.begin(), ally.values.end(), stacked_y.begin());
  for (std::size_t k = 0; k < tx.rows(); ++k) {
    const std::size_t row = base + static_cast<std::size_t>(sorted_test[k] - lo);
    for (std::size_t p = tx.row_offsets()[k]; p < tx.row_offsets()[k + 1]; ++p) {
      stacked_x[row * f + tx.col_indices()[p]] = tx.values()[p];
    }
    std::copy_n(ty.values.begin() + static_cast<std::ptrdiff_t>(k * c), c, stacked_y.begin() + static_cast<std::ptrdiff_t>(row * c));
  }
  std::vector<double> x = stacked_x;
  std::vector<double> y = stacked_y;
  for (std::size_t k = 0; k < test_index.size(); ++k) {
    const auto dst = static_cast<std::size_t>(test_index[k]);
    const auto src = static_cast<std::size_t>(sorted_test[k]);
    std::copy_n(stacked_x.begin() + static_cast<std::ptrdiff_t>(src * f), f, x.begin() + static_cast<std::ptrdiff_t>(dst * f));
    std::copy_n(stacked_y.begin() + static_cast<std::ptrdiff_t>(src * c), c, y.begin() + static_cast<std::ptrdiff_t>(dst * c));
  }

  GraphDataset g;
  g.name = name;
  g.num_nodes = n;
  g.num_classes = c;
  g.features = ad::Tensor::constant({n, f}, std::move(x));
  g.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = y.begin() + static_cast<std::ptrdiff_t>(i * c);
    g.labels[i] = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [node, nbrs] : adjacency) {
    for (auto v : nbrs) {
      if (node < 0 || v < 0 || static_cast<std::size_t>(node) >= n || static_cast<std::size_t>(v) >= n) {
        throw DataError(file("graph").string() + ": node id outside [0, " + std::to_string(n) + ")");
      }
      pairs.emplace_back(static_cast<std::size_t>(node), static_cast<std::size_t>(v));
    }
  }
  g.raw_edge_records = pairs.size();
  g.edges = canonicalize(std::move(pairs));
  return g;
}

}  // namespace

EdgeSet::EdgeSet(std::size_t num_nodes, const EdgeList& edges) : n_(num_nodes) {
  keys_.reserve(edges.size() * 2);
  for (const auto& e : edges) insert(e);
}

void validate(const GraphDataset& g) {
  if (!g.features.defined() || g.features.rank() != 2 || g.features.rows() != g.num_nodes) {
    throw DataError(g.name + ": feature matrix rows do not match node count");
  }
  if (g.labels.size() != g.num_nodes) throw DataError(g.name + ": label count does not match node count");
  for (int l : g.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= g.num_classes) throw DataError(g.name + ": label outside class range");
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    if (e.u >= e.v) throw DataError(g.name + ": edge not canonical or self-loop");
    if (e.v >= g.num_nodes) throw DataError(g.name + ": edge endpoint out of range");
    if (i > 0 && !(g.edges[i - 1] < e)) throw DataError(g.name + ": edges unsorted or duplicated");
  }
}

GraphDataset load_planetoid(const std::string& name, const fs::path& dir) {
  if (name != "cora" && name != "citeseer" && name != "pubmed") {
    throw DataError("unknown Planetoid dataset '" + name + "'");
  }
  GraphDataset g;
  if (fs::exists(dir / ("ind." + name + ".graph"))) {
    g = load_planetoid_pickles(name, dir);
  } else if (name == "cora" && fs::exists(dir / "cora.content")) {
    g = load_linqs_cora(dir);
  } else {
    throw DataError("missing file " + (dir / ("ind." + name + ".graph")).string());
  }
  validate(g);
  log_edges(g);
  return g;
}

GraphDataset load_wikics(const fs::path& file) {
  nlohmann::json doc;
  {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(file.string() + ": malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
    }
  }
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!doc.is_object() || !doc.contains(key)) throw DataError(file.string() + ": missing key '" + key + "'");
    return doc.at(key);
  };
  try {
    const auto& feats = field("features");
    const auto& labels = field("labels");
    const auto& links = field("links");
    if (!feats.is_array() || !labels.is_array() || !links.is_array()) {
      throw DataError(file.string() + ": features/labels/links must be arrays");
    }
    const std::size_t n = feats.size();
    if (labels.size() != n || links.size() != n) {
      throw DataError(file.string() + ": features, labels and links lengths differ");
    }
    if (n == 0) throw DataError(file.string() + ": no nodes");
    const std::size_t f = feats[0].size();
    std::vector<double> x;
    x.reserve(n * f);
    for (std::size_t i = 0; i < n; ++i) {
      if (!feats[i].is_array() || feats[i].size() != f) {
        throw DataError(file.string() + ": features[" + std::to_string(i) + "] has wrong length");
      }
      for (const auto& v : feats[i]) x.push_back(v.get<double>());
    }
    GraphDataset g;
    g.name = "wikics";
    g.num_nodes = n;
    g.features = ad::Tensor::constant({n, f}, std::move(x));
    int max_label = -1;
    for (const auto& l : labels) {
      g.labels.push_back(l.get<int>());
      max_label = std::max(max_label, g.labels.back());
    }
    g.num_classes = static_cast<std::size_t>(max_label + 1);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& v : links[i]) {
        const auto j = v.get<std::int64_t>();
        if (j < 0 || static_cast<std::size_t>(j) >= n) {
          throw DataError(file.string() + ": links[" + std::to_string(i) + "] references node " + std::to_string(j));
        }
        pairs.emplace_back(i, static_cast<std::size_t>(j));
      }
    }
    g.raw_edge_records = pairs.size();
    g.edges = canonicalize(std::move(pairs));
    validate(g);
    log_edges(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(file.string() + ": unexpected JSON content: " + e.what());
  }
}

GraphDataset load_dataset(const std::string& name, const fs::path& data_dir) {
  if (name == "wikics") return load_wikics(data_dir / "wikics" / "data.json");
  return load_planetoid(name, data_dir / name);
}

EdgeList sample_negative_edges(std::size_t num_nodes, std::size_t count, const EdgeSet& exclude, Rng& rng) {
  if (count == 0) return {};
  const std::uint64_t n = num_nodes;
  const std::uint64_t all_pairs = n * (n - (n > 0 ? 1 : 0)) / 2;
  const std::uint64_t available = all_pairs > exclude.size() ? all_pairs - exclude.size() : 0;
  if (count > available) {
    throw SamplingError("cannot sample " + std::to_string(count) + " negative pairs; only " +
                        std::to_string(available) + " non-edges exist");
  }
  EdgeList out;
  out.reserve(count);
  if (count * 2 > available) {
    // Dense regime: enumerate and take a random subset.
    EdgeList pool;
    for (std::size_t u = 0; u < num_nodes; ++u)
      for (std::size_t v = u + 1; v < num_nodes; ++v)
        if (!exclude.contains(u, v)) pool.push_back({u, v});
    shuffle(pool.begin(), pool.end(), rng);
    pool.resize(count);
    return pool;
  }
  EdgeSet taken(num_nodes);
  while (out.size() < count) {
    const auto a = static_cast<std::size_t>(rng.below(n));
    const auto b = static_cast<std::size_t>(rng.below(n));
    if (a == b || exclude.contains(a, b) || taken.contains(a, b)) continue;
    const Edge e = Edge::canonical(a, b);
    taken.insert(e);
    out.push_back(e);
  }
  return out;
}

EdgeSplit split_edges(const GraphDataset& g, double val_frac, double test_frac, std::uint64_t seed) {
  if (!(val_frac > 0.0 && test_frac > 0.0 && val_frac + test_frac < 1.0)) {
    throw SplitError("split fractions must be positive and sum to less than 1");
  }
  const std::size_t m = g.edges.size();
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(m)));
  const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(m)));
  if (n_val == 0 || n_test == 0 || n_val + n_test >= m) {
    throw SplitError(g.name + ": " + std::to_string(m) + " edges are too few for a validation/test split");
  }
  Rng rng(seed);
  Rng perm_rng = rng.split(1);
  Rng neg_rng = rng.split(2);

  EdgeList shuffled = g.edges;
  shuffle(shuffled.begin(), shuffled.end(), perm_rng);

  EdgeSplit s;
  s.dataset = g.name;
  s.seed = seed;
  s.val_frac = val_frac;
  s.test_frac = test_frac;
  s.test_pos.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val_pos.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test),
                   shuffled.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train_pos.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), shuffled.end());

  const EdgeSet all(g.num_nodes, g.edges);
  EdgeList neg = sample_negative_edges(g.num_nodes, n_val + n_test, all, neg_rng);
  s.val_neg.assign(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test_neg.assign(neg.begin() + static_cast<std::ptrdiff_t>(n_val), neg.end());
  return s;
}

ad::Tensor row_normalize_features(const ad::Tensor& x) {
  if (x.rank() != 2) throw ShapeError("row_normalize_features: expected a matrix");
  const std::size_t n = x.rows(), f = x.cols();
  std::vector<double> v(x.value().begin(), x.value().end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < f; ++j) s += v[i * f + j];
    if (s == 0.0) continue;
    for (std::size_t j = 0; j < f; ++j) v[i * f + j] /= s;
  }
  return ad::Tensor::constant({n, f}, std::move(v));
}

SparseMatrix normalize_adjacency(const EdgeList& edges, std::size_t num_nodes) {
  std::vector<double> degree(num_nodes, 1.0);
  for (const auto& e : edges) {
    if (e.u >= num_nodes || e.v >= num_nodes) throw IndexError("normalize_adjacency: endpoint out of range");
    degree[e.u] += 1.0;
    degree[e.v] += 1.0;
  }
  std::vector<double> inv_sqrt(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
  std::vector<Triplet> t;
  t.reserve(2 * edges.size() + num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) t.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
  for (const auto& e : edges) {
    const double w = inv_sqrt[e.u] * inv_sqrt[e.v];
    t.push_back({e.u, e.v, w});
    t.push_back({e.v, e.u, w});
  }
  return SparseMatrix::from_triplets(num_nodes, num_nodes, std::move(t));
}

SparseMatrix mean_neighbor_operator(const EdgeList& edges, std::size_t num_nodes) {
  std::vector<double> degree(num_nodes, 0.0);
  for (const auto& e : edges) {
    if (e.u >= num_nodes || e.v >= num_nodes) throw IndexError("mean_neighbor_operator: endpoint out of range");
    degree[e.u] += 1.0;
    degree[e.v] += 1.0;
  }
  std::vector<Triplet> t;
  t.reserve(2 * edges.size());
  for (const auto& e : edges) {
    t.push_back({e.u, e.v, 1.0 / degree[e.u]});
    t.push_back({e.v, e.u, 1.0 / degree[e.v]});
  }
  return SparseMatrix::from_triplets(num_nodes, num_nodes, std::move(t));
}

MessageEdges message_edges_with_self_loops(const EdgeList& edges, std::size_t num_nodes) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (dst, src)
  pairs.reserve(2 * edges.size() + num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) pairs.emplace_back(i, i);
  for (const auto& e : edges) {
    if (e.u >= num_nodes || e.v >= num_nodes) throw IndexError("message_edges: endpoint out of range");
    pairs.emplace_back(e.v, e.u);
    pairs.emplace_back(e.u, e.v);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  MessageEdges out;
  out.num_nodes = num_nodes;
  out.src.reserve(pairs.size());
  out.dst.reserve(pairs.size());
  for (auto [d, s] : pairs) {
    out.dst.push_back(d);
    out.src.push_back(s);
  }
  return out;
}

void write_split(std::ostream& out, const EdgeSplit& s) {
  out << "linkbench-split 1\n";
  out << "dataset " << s.dataset << "\n";
  out << "seed " << s.seed << "\n";
  out.precision(17);
  out << "val_frac " << s.val_frac << "\n";
  out << "test_frac " << s.test_frac << "\n";
  const std::pair<const char*, const EdgeList*> sections[] = {{"train_pos", &s.train_pos}, {"val_pos", &s.val_pos},
                                                              {"test_pos", &s.test_pos},   {"val_neg", &s.val_neg},
                                                              {"test_neg", &s.test_neg}};
  for (const auto& [name, list] : sections) {
    out << "section " << name << " " << list->size() << "\n";
    for (const auto& e : *list) out << e.u << " " << e.v << "\n";
  }
}

EdgeSplit read_split(std::istream& in) {
  EdgeSplit s;
  std::string key;
  std::size_t version = 0;
  if (!(in >> key >> version) || key != "linkbench-split" || version != 1) {
    throw DataError("split: missing 'linkbench-split 1' header");
  }
  if (!(in >> key >> s.dataset) || key != "dataset") throw DataError("split: expected 'dataset'");
  if (!(in >> key >> s.seed) || key != "seed") throw DataError("split: expected 'seed'");
  if (!(in >> key >> s.val_frac) || key != "val_frac") throw DataError("split: expected 'val_frac'");
  if (!(in >> key >> s.test_frac) || key != "test_frac") throw DataError("split: expected 'test_frac'");
  const std::pair<const char*, EdgeList*> sections[] = {{"train_pos", &s.train_pos}, {"val_pos", &s.val_pos},
                                                        {"test_pos", &s.test_pos},   {"val_neg", &s.val_neg},
                                                        {"test_neg", &s.test_neg}};
  for (const auto& [name, list] : sections) {
    std::string tag, got;
    std::size_t count = 0;
    if (!(in >> tag >> got >> count) || tag != "section" || got != name) {
      throw DataError(std::string("split: expected section ") + name);
    }
    list->resize(count);
    for (auto& e : *list) {
      if (!(in >> e.u >> e.v)) throw DataError(std::string("split: truncated section ") + name);
    }
  }
  return s;
}

void save_split(const fs::path& path, const EdgeSplit& split) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write " + path.string());
  write_split(out, split);
  if (!out) throw FileError("write failed for " + path.string());
}

EdgeSplit load_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_split(in);
}

}  // namespace linkbench
