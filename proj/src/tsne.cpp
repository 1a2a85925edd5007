#include "linkbench/tsne.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <fmt/os.h>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "linkbench/error.hpp"
#include "linkbench/log.hpp"

namespace linkbench {

namespace {

std::vector<double> squared_distances(const ad::Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  const auto v = x.value();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = v[i * d + k] - v[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = out[j * n + i] = s;
    }
  }
  return out;
}

// Conditional row i at precision beta; returns its entropy in nats.
double conditional_row(const double* dist, std::size_t n, std::size_t i, double beta, double* row) {
  double min_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) min_d = std::min(min_d, dist[j]);
  // Shifting by the nearest distance leaves the normalized row unchanged.
  double sum = 0.0, weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) {
      row[j] = 0.0;
      continue;
    }
    row[j] = std::exp(-beta * (dist[j] - min_d));
    sum += row[j];
    weighted += (dist[j] - min_d) * row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  return std::log(sum) + beta * weighted / sum;
}

}  // namespace

Affinities pairwise_affinities(const ad::Tensor& x, double perplexity) {
  if (x.rank() != 2) throw ShapeError("pairwise_affinities: expected an N x d matrix");
  const std::size_t n = x.rows();
  if (n < 3) throw ContractError("pairwise_affinities: need at least 3 points");
  if (!(perplexity > 0.0 && perplexity <= static_cast<double>(n - 1))) {
    throw ConfigError(fmt::format("perplexity {} is infeasible for {} points", perplexity, n));
  }
  const auto dist = squared_distances(x);
  const double target = std::log(perplexity);
  std::vector<double> cond(n * n, 0.0);
  Affinities a;
  a.n = n;
  a.row_entropy.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double* row = cond.data() + i * n;
    double h = conditional_row(dist.data() + i * n, n, i, beta, row);
    for (int step = 0; step < kPerplexityMaxSteps && std::abs(h - target) > kPerplexityTolerance; ++step) {
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
      h = conditional_row(dist.data() + i * n, n, i, beta, row);
    }
    if (!std::isfinite(h)) throw NumericError(fmt::format("pairwise_affinities: bandwidth search failed for row {}", i));
    a.row_entropy[i] = h;
  }
  a.p.assign(n * n, 0.0);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a.p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
  return a;
}

namespace {

// KL(P || Q) for coordinates y.
double kl_divergence(const Affinities& a, const std::vector<double>& y) {
  const std::size_t n = a.n;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      z += 2.0 / (1.0 + dx * dx + dy * dy);
    }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = a.p[i * n + j];
      if (p <= 0.0) continue;
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      const double q = 1.0 / (1.0 + dx * dx + dy * dy) / z;
      kl += 2.0 * p * std::log(p / q);
    }
  return kl;
}

}  // namespace

Projection tsne_project(const ad::Tensor& x, const std::vector<int>& labels, const TsneConfig& cfg) {
  if (x.rank() != 2) throw ShapeError("tsne_project: expected an N x d matrix");
  const std::size_t n = x.rows();
  if (n < 3) throw ContractError("tsne_project: need at least 3 points");
  if (!labels.empty() && labels.size() != n) throw ShapeError("tsne_project: one label per point required");
  if (cfg.iterations == 0) throw ConfigError("tsne_project: iterations must be positive");
  double perplexity = cfg.perplexity;
  const double cap = static_cast<double>(n - 1) / 3.0;
  if (perplexity >= cap) {
    perplexity = std::max(1.0, cap);
    log::info("t-SNE: perplexity {} too large for {} points, using {}", cfg.perplexity, n, perplexity);
  }
  const Affinities a = pairwise_affinities(x, perplexity);

  Rng rng(cfg.seed);
  std::vector<double> y(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n);
  for (auto& v : y) v = cfg.init_stddev * rng.normal();

  Projection out;
  out.labels = labels;
  out.kl_trace.emplace_back(0, kl_divergence(a, y));
  // Per-point attractive sum_j p_ij k_ij (y_i - y_j) and repulsive
  // sum_j k_ij^2 (y_i - y_j), with k_ij = 1 / (1 + |y_i - y_j|^2), gathered in
  // one pass over i < j.
  std::vector<double> attract(2 * n), repulse(2 * n);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const double exaggeration = it <= cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = it <= cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;
    std::fill(attract.begin(), attract.end(), 0.0);
    std::fill(repulse.begin(), repulse.end(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double yi0 = y[2 * i], yi1 = y[2 * i + 1];
      const double* pr = a.p.data() + i * n;
      double ax = 0.0, ay = 0.0, rx = 0.0, ry = 0.0, zi = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = yi0 - y[2 * j], dy = yi1 - y[2 * j + 1];
        const double k = 1.0 / (1.0 + dx * dx + dy * dy);
        const double pk = pr[j] * k, kk = k * k;
        zi += k;
        ax += pk * dx;
        ay += pk * dy;
        rx += kk * dx;
        ry += kk * dy;
        attract[2 * j] -= pk * dx;
        attract[2 * j + 1] -= pk * dy;
        repulse[2 * j] -= kk * dx;
        repulse[2 * j + 1] -= kk * dy;
      }
      attract[2 * i] += ax;
      attract[2 * i + 1] += ay;
      repulse[2 * i] += rx;
      repulse[2 * i + 1] += ry;
      z += 2.0 * zi;
    }
    for (std::size_t k = 0; k < 2 * n; ++k) grad[k] = 4.0 * (exaggeration * attract[k] - repulse[k] / z);
    for (std::size_t k = 0; k < 2 * n; ++k) {
      const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
      gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
      update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cx += y[2 * i];
      cy += y[2 * i + 1];
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= cx;
      y[2 * i + 1] -= cy;
      finite = finite && std::isfinite(y[2 * i]) && std::isfinite(y[2 * i + 1]);
    }
    if (!finite) throw NumericError(fmt::format("t-SNE diverged at iteration {}", it));
    if (cfg.trace_every && (it % cfg.trace_every == 0 || it == cfg.iterations)) {
      const double kl = kl_divergence(a, y);
      if (!std::isfinite(kl)) throw NumericError(fmt::format("t-SNE objective non-finite at iteration {}", it));
      out.kl_trace.emplace_back(it, kl);
      log::debug("t-SNE iteration {} KL {:.6f}", it, kl);
    }
  }
  out.coords = ad::Tensor::constant({n, 2}, std::move(y));
  return out;
}

std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, std::size_t max_points, Rng& rng) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n <= max_points) return all;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  // Largest-remainder apportionment of max_points across classes.
  std::vector<std::pair<int, std::size_t>> quota;
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (const auto& [c, members] : by_class) {
    const double exact = static_cast<double>(max_points) * static_cast<double>(members.size()) / static_cast<double>(n);
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    quota.emplace_back(c, whole);
    remainders.emplace_back(exact - static_cast<double>(whole), c);
    assigned += whole;
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < max_points && k < remainders.size(); ++k, ++assigned) {
    for (auto& q : quota)
      if (q.first == remainders[k].second) ++q.second;
  }
  std::vector<std::size_t> out;
  for (const auto& [c, count] : quota) {
    auto members = by_class[c];
    shuffle(members.begin(), members.end(), rng);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Qualitative 10-colour palette.
constexpr std::array<const char*, 10> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

void write_svg(const Projection& p, fmt::ostream& out, const std::string& title) {
  const std::size_t n = p.coords.rows();
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t i = 0; i < n; ++i) {
    x0 = std::min(x0, p.coords.at(i, 0));
    x1 = std::max(x1, p.coords.at(i, 0));
    y0 = std::min(y0, p.coords.at(i, 1));
    y1 = std::max(y1, p.coords.at(i, 1));
  }
  const double size = 800.0, margin = 20.0, legend_w = 140.0;
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  const double s = (size - 2 * margin) / span;
  out.print("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
  out.print("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{1}\" "
            "viewBox=\"0 0 {0} {1}\">\n",
            size + legend_w, size);
  out.print("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
  if (!title.empty()) {
    out.print("<text x=\"{}\" y=\"16\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
              size / 2, title);
  }
  out.print("<g stroke=\"none\" fill-opacity=\"0.8\">\n");
  for (std::size_t i = 0; i < n; ++i) {
    const int label = p.labels.empty() ? 0 : p.labels[i];
    const double cx = margin + (p.coords.at(i, 0) - x0) * s;
    const double cy = size - margin - (p.coords.at(i, 1) - y0) * s;
    out.print("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n", cx, cy,
              kPalette[static_cast<std::size_t>(label) % kPalette.size()]);
  }
  out.print("</g>\n");
  std::vector<int> classes(p.labels);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  out.print("<g font-family=\"sans-serif\" font-size=\"12\">\n");
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const double ly = margin + 20.0 * static_cast<double>(k);
    out.print("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", size + 10, ly,
              kPalette[static_cast<std::size_t>(classes[k]) % kPalette.size()]);
    out.print("<text x=\"{}\" y=\"{}\">class {}</text>\n", size + 28, ly + 10, classes[k]);
  }
  out.print("</g>\n</svg>\n");
}

}  // namespace

void emit_scatter(const Projection& p, const std::filesystem::path& path, ScatterFormat format,
                  const std::string& title) {
  if (p.coords.rank() != 2 || p.coords.cols() != 2) throw ShapeError("emit_scatter: coordinates must be N x 2");
  if (!p.labels.empty() && p.labels.size() != p.coords.rows()) throw ShapeError("emit_scatter: label count mismatch");
  try {
    auto out = fmt::output_file(path.string());
    if (format == ScatterFormat::csv) {
      out.print("x,y,label\n");
      for (std::size_t i = 0; i < p.coords.rows(); ++i) {
        out.print("{:.9g},{:.9g},{}\n", p.coords.at(i, 0), p.coords.at(i, 1), p.labels.empty() ? 0 : p.labels[i]);
      }
    } else {
      write_svg(p, out, title);
    }
  } catch (const std::system_error& e) {
    throw FileError("cannot write " + path.string() + ": " + e.what());
  }
}

Projection read_scatter_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,y,label") throw DataError(path.string() + ": missing x,y,label header");
  std::vector<double> xy;
  Projection p;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw DataError(fmt::format("{}:{}: expected three fields", path.string(), lineno));
    }
    try {
      xy.push_back(std::stod(a));
      xy.push_back(std::stod(b));
      p.labels.push_back(std::stoi(c));
    } catch (const std::exception&) {
      throw DataError(fmt::format("{}:{}: malformed number", path.string(), lineno));
    }
  }
  const std::size_t n = p.labels.size();
  p.coords = ad::Tensor::constant({n, 2}, std::move(xy));
  return p;
}

}  // namespace linkbench
