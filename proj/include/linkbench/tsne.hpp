#pragma once

// Exact t-SNE for projecting node embeddings to the plane.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "linkbench/autodiff.hpp"
#include "linkbench/rng.hpp"

namespace linkbench {

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
  double init_stddev = 1e-4;
  std::size_t trace_every = 50;
  std::uint64_t seed = 0;
};

/// Symmetric joint probabilities, dense row-major N x N.
struct Affinities {
  std::size_t n = 0;
  std::vector<double> p;
  std::vector<double> row_entropy;  // entropy (nats) of each conditional row
  double at(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

inline constexpr double kPerplexityTolerance = 1e-5;
inline constexpr int kPerplexityMaxSteps = 50;

/// Per-row Gaussian bandwidths by bisection so each conditional has entropy
/// log(perplexity), then P = (P_j|i + P_i|j) / 2N.
Affinities pairwise_affinities(const ad::Tensor& x, double perplexity);

struct Projection {
  ad::Tensor coords;  // N x 2
  std::vector<int> labels;
  std::vector<std::pair<std::size_t, double>> kl_trace;  // (iteration, KL(P||Q)); iteration 0 is the start
};

/// Gradient descent on KL(P || Q) with a Student-t kernel and the exact
/// O(N^2) gradient. Perplexity is capped at (N - 1) / 3 for small inputs.
Projection tsne_project(const ad::Tensor& x, const std::vector<int>& labels, const TsneConfig& cfg);

/// Sorted indices of at most `max_points` nodes, each class keeping its share
/// (largest remainders break ties toward smaller class ids).
std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, std::size_t max_points, Rng& rng);

inline constexpr std::size_t kMaxTsnePoints = 8000;

enum class ScatterFormat { csv, svg };

/// csv: header x,y,label and one row per node (9 significant digits).
/// svg: one circle per node coloured by label, no axes, a class legend.
void emit_scatter(const Projection& p, const std::filesystem::path& path, ScatterFormat format,
                  const std::string& title = "");

/// Reads the csv form back.
Projection read_scatter_csv(const std::filesystem::path& path);

}  // namespace linkbench
