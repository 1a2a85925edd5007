#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linkbench/autodiff.hpp"
#include "linkbench/graph_data.hpp"
#include "linkbench/rng.hpp"

namespace linkbench {

/// Area under the ROC curve via the Mann-Whitney rank sum, midranks for ties.
/// Throws MetricError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Sum over descending distinct-score thresholds of (recall step) x precision.
/// Equal scores form one threshold.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double half_width() const { return (hi - lo) / 2.0; }
};

inline constexpr std::size_t kDefaultBootstrapResamples = 1000;

/// Percentile bootstrap interval of the mean; percentiles linearly interpolated.
Interval bootstrap_ci(std::span<const double> values, double level, std::size_t resamples, Rng& rng);

/// Percentile of `sorted` at q in [0, 1], linear interpolation between order statistics.
double percentile(std::span<const double> sorted, double q);

struct LinkScores {
  double auc = 0.0;
  double ap = 0.0;
};

/// Scores sigmoid(<z_u, z_v>) for positives (label 1) and negatives (label 0).
LinkScores evaluate_split(const ad::Tensor& z, const EdgeList& pos, const EdgeList& neg);

struct RunReport {
  std::string dataset;
  std::string model;
  std::vector<double> auc;
  std::vector<double> ap;
  double mean_auc = 0.0;
  double mean_ap = 0.0;
  double std_auc = 0.0;  // sample standard deviation; 0 for a single run
  double std_ap = 0.0;
  Interval ci95_auc;
  Interval ci95_ap;
};

/// Aggregates per-run metrics. The bootstrap draws from Rng(bootstrap_seed).
RunReport summarize_runs(std::string dataset, std::string model, std::vector<double> auc, std::vector<double> ap,
                         std::size_t resamples, std::uint64_t bootstrap_seed);

}  // namespace linkbench
