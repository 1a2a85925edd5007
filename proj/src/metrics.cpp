#include "linkbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linkbench/error.hpp"
#include "linkbench/models.hpp"

namespace linkbench {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check_scored(std::span<const double> scores, std::span<const int> labels, const char* who) {
  if (scores.size() != labels.size()) throw ShapeError(std::string(who) + ": scores and labels lengths differ");
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw MetricError(std::string(who) + ": labels must be 0 or 1");
    if (std::isnan(scores[i])) throw MetricError(std::string(who) + ": NaN score");
    (labels[i] ? c.pos : c.neg) += 1;
  }
  if (c.pos == 0 || c.neg == 0) throw MetricError(std::string(who) + ": undefined without both classes");
  return c;
}

// Indices ordered by descending score; ties keep input order.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto c = check_scored(scores, labels, "roc_auc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the positive rank sum keeps midranks integral.
  double rank_sum2 = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) pos_in_group += labels[idx[j++]];
    // Ranks i+1 .. j share the midrank (i+1+j)/2.
    rank_sum2 += static_cast<double>(pos_in_group) * static_cast<double>(i + 1 + j);
    i = j;
  }
  const double p = static_cast<double>(c.pos), n = static_cast<double>(c.neg);
  const double u2 = rank_sum2 - p * (p + 1.0);
  return u2 / (2.0 * p * n);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  const auto c = check_scored(scores, labels, "average_precision");
  const auto idx = descending_order(scores);
  std::size_t tp = 0, seen = 0;
  double ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i, tp_step = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) tp_step += labels[idx[j++]];
    tp += tp_step;
    seen = j;
    if (tp_step) {
      ap += (static_cast<double>(tp_step) / static_cast<double>(c.pos)) *
            (static_cast<double>(tp) / static_cast<double>(seen));
    }
    i = j;
  }
  return ap;
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw MetricError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("percentile: q must lie in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Interval bootstrap_ci(std::span<const double> values, double level, std::size_t resamples, Rng& rng) {
  if (values.empty()) throw MetricError("bootstrap_ci: no values");
  if (resamples == 0) throw ConfigError("bootstrap_ci: resample count must be positive");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("bootstrap_ci: level must lie in (0, 1)");
  const std::size_t r = values.size();
  std::vector<double> means(resamples);
  for (auto& m : means) {
    // Shifted by the first draw so a constant sample averages exactly.
    const double first = values[rng.below(r)];
    double s = 0.0;
    for (std::size_t k = 1; k < r; ++k) s += values[rng.below(r)] - first;
    m = first + s / static_cast<double>(r);
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return {percentile(means, tail), percentile(means, 1.0 - tail)};
}

LinkScores evaluate_split(const ad::Tensor& z, const EdgeList& pos, const EdgeList& neg) {
  ad::Tape tape(false);
  EdgeList pairs(pos);
  pairs.insert(pairs.end(), neg.begin(), neg.end());
  const auto logits = decode_edges(tape, z, pairs);
  std::vector<double> scores(pairs.size());
  std::vector<int> labels(pairs.size(), 0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    scores[i] = 1.0 / (1.0 + std::exp(-logits.at(i)));
    if (i < pos.size()) labels[i] = 1;
  }
  return {roc_auc(scores, labels), average_precision(scores, labels)};
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

RunReport summarize_runs(std::string dataset, std::string model, std::vector<double> auc, std::vector<double> ap,
                         std::size_t resamples, std::uint64_t bootstrap_seed) {
  if (auc.empty() || auc.size() != ap.size()) throw MetricError("summarize_runs: need matching, non-empty run lists");
  RunReport r;
  r.dataset = std::move(dataset);
  r.model = std::move(model);
  r.auc = std::move(auc);
  r.ap = std::move(ap);
  r.mean_auc = mean_of(r.auc);
  r.mean_ap = mean_of(r.ap);
  r.std_auc = sample_std(r.auc, r.mean_auc);
  r.std_ap = sample_std(r.ap, r.mean_ap);
  Rng rng(bootstrap_seed);
  Rng rng_auc = rng.split(1), rng_ap = rng.split(2);
  r.ci95_auc = bootstrap_ci(r.auc, 0.95, resamples, rng_auc);
  r.ci95_ap = bootstrap_ci(r.ap, 0.95, resamples, rng_ap);
  return r;
}

}  // namespace linkbench
