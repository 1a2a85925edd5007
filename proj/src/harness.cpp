#include "linkbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fmt/format.h>
#include <fmt/os.h>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "linkbench/error.hpp"
#include "linkbench/graph_data.hpp"
#include "linkbench/log.hpp"
#include "linkbench/training.hpp"
#include "linkbench/tsne.hpp"

namespace linkbench {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "dataset",  "model",     "runs",          "epochs",          "lr",   "split_seed",
      "run_seed", "jobs",      "emit_tsne",     "resplit_per_run", "out",  "data",
      "bootstrap_resamples",   "bootstrap_seed", "feature_norm"};
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

}  // namespace

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key = value", path.string(), lineno));
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", path.string(), lineno));
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

ExperimentConfig parse_config(const std::map<std::string, std::string>& flags,
                              const std::optional<fs::path>& config_file) {
  std::map<std::string, std::string> merged;
  if (config_file) merged = read_config_file(*config_file);
  for (const auto& [k, v] : flags) merged[k] = v;
  const auto& known = config_keys();

  ExperimentConfig cfg;
  bool lr_set = false, data_set = false;
  for (const auto& [key, value] : merged) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown key '" + key + "'");
    if (key == "dataset") {
      if (std::find(kDatasets.begin(), kDatasets.end(), value) == kDatasets.end()) {
        throw ConfigError("dataset: unknown dataset '" + value + "'");
      }
      cfg.dataset = value;
    } else if (key == "model") {
      cfg.model = parse_model_kind(value);
    } else if (key == "runs") {
      cfg.runs = parse_unsigned(key, value);
      if (cfg.runs == 0) throw ConfigError("runs: must be at least 1");
    } else if (key == "epochs") {
      cfg.epochs = parse_unsigned(key, value);
    } else if (key == "lr") {
      cfg.lr = parse_double(key, value);
      if (cfg.lr <= 0.0) throw ConfigError("lr: must be positive");
      lr_set = true;
    } else if (key == "split_seed") {
      cfg.split_seed = parse_unsigned(key, value);
    } else if (key == "run_seed") {
      cfg.run_seed = parse_unsigned(key, value);
    } else if (key == "bootstrap_seed") {
      cfg.bootstrap_seed = parse_unsigned(key, value);
    } else if (key == "bootstrap_resamples") {
      cfg.bootstrap_resamples = parse_unsigned(key, value);
      if (cfg.bootstrap_resamples == 0) throw ConfigError("bootstrap_resamples: must be at least 1");
    } else if (key == "jobs") {
      cfg.jobs = parse_unsigned(key, value);
      if (cfg.jobs == 0) throw ConfigError("jobs: must be at least 1");
    } else if (key == "emit_tsne") {
      cfg.emit_tsne = parse_bool(key, value);
    } else if (key == "resplit_per_run") {
      cfg.resplit_per_run = parse_bool(key, value);
    } else if (key == "feature_norm") {
      cfg.feature_norm = parse_feature_norm(value);
    } else if (key == "out") {
      if (value.empty()) throw ConfigError("out: empty path");
      cfg.out_dir = value;
    } else if (key == "data") {
      if (value.empty()) throw ConfigError("data: empty path");
      cfg.data_dir = value;
      data_set = true;
    }
  }
  if (!lr_set) cfg.lr = (cfg.model == ModelKind::gat && cfg.dataset == "wikics") ? 0.001 : 0.01;
  if (!data_set) {
    const char* env = std::getenv("LINKBENCH_DATA");
    cfg.data_dir = (env && *env) ? fs::path(env) : fs::path("data");
  }
  return cfg;
}

fs::path experiment_dir(const ExperimentConfig& cfg) {
  return cfg.out_dir / (cfg.dataset + "_" + to_string(cfg.model));
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
  if (!out) throw FileError("write failed for " + path.string());
}

json metric_json(const std::vector<double>& runs, double mean, double sd, const Interval& ci) {
  return json{{"runs", runs},
              {"mean", mean},
              {"std", sd},
              {"ci95", {{"lo", ci.lo}, {"hi", ci.hi}, {"half_width", ci.half_width()}}}};
}

}  // namespace

std::string report_json(const ExperimentConfig& cfg, const RunReport& report) {
  json c{{"dataset", cfg.dataset},
         {"model", to_string(cfg.model)},
         {"runs", cfg.runs},
         {"epochs", cfg.epochs},
         {"lr", cfg.lr},
         {"split_seed", cfg.split_seed},
         {"run_seed", cfg.run_seed},
         {"resplit_per_run", cfg.resplit_per_run},
         {"feature_norm", to_string(resolve_feature_norm(cfg.feature_norm, cfg.model))},
         {"val_frac", kDefaultValFrac},
         {"test_frac", kDefaultTestFrac},
         {"bootstrap_resamples", cfg.bootstrap_resamples},
         {"bootstrap_seed", cfg.bootstrap_seed},
         {"emit_tsne", cfg.emit_tsne}};
  json doc{{"format", "linkbench-report"},
           {"version", 1},
           {"config", c},
           {"auc", metric_json(report.auc, report.mean_auc, report.std_auc, report.ci95_auc)},
           {"ap", metric_json(report.ap, report.mean_ap, report.std_ap, report.ci95_ap)}};
  return doc.dump(2) + "\n";
}

StoredReport parse_report_json(const std::string& text) {
  StoredReport s;
  try {
    const json doc = json::parse(text);
    if (doc.at("format") != "linkbench-report") throw DataError("not a linkbench report");
    const json& c = doc.at("config");
    ExperimentConfig& cfg = s.config;
    cfg.dataset = c.at("dataset").get<std::string>();
    cfg.model = parse_model_kind(c.at("model").get<std::string>());
    cfg.runs = c.at("runs").get<std::size_t>();
    cfg.epochs = c.at("epochs").get<std::size_t>();
    cfg.lr = c.at("lr").get<double>();
    cfg.split_seed = c.at("split_seed").get<std::uint64_t>();
    cfg.run_seed = c.at("run_seed").get<std::uint64_t>();
    cfg.resplit_per_run = c.at("resplit_per_run").get<bool>();
    cfg.feature_norm = parse_feature_norm(c.at("feature_norm").get<std::string>());
    cfg.bootstrap_resamples = c.at("bootstrap_resamples").get<std::size_t>();
    cfg.bootstrap_seed = c.at("bootstrap_seed").get<std::uint64_t>();
    cfg.emit_tsne = c.at("emit_tsne").get<bool>();
    RunReport& r = s.report;
    r.dataset = cfg.dataset;
    r.model = to_string(cfg.model);
    auto read_metric = [](const json& m, std::vector<double>& runs, double& mean, double& sd, Interval& ci) {
      runs = m.at("runs").get<std::vector<double>>();
      mean = m.at("mean").get<double>();
      sd = m.at("std").get<double>();
      ci = {m.at("ci95").at("lo").get<double>(), m.at("ci95").at("hi").get<double>()};
    };
    read_metric(doc.at("auc"), r.auc, r.mean_auc, r.std_auc, r.ci95_auc);
    read_metric(doc.at("ap"), r.ap, r.mean_ap, r.std_ap, r.ci95_ap);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return s;
}

StoredReport load_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_report_json(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<StoredReport> load_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<StoredReport> out;
  for (const auto& p : paths) out.push_back(load_report(p));
  return out;
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  std::string text;
  for (int l : labels) text += std::to_string(l) + "\n";
  write_text(path, text);
}

std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<int> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    line = trim(line);
    if (line.empty()) continue;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      throw DataError(fmt::format("{}:{}: expected an integer label", path.string(), lineno));
    }
    out.push_back(v);
  }
  return out;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  GraphDataset g = load_dataset(cfg.dataset, cfg.data_dir);
  const FeatureNorm norm = resolve_feature_norm(cfg.feature_norm, cfg.model);
  if (norm == FeatureNorm::row) g.features = row_normalize_features(g.features);
  const ModelConfig mc = default_model_config(cfg.model, g.num_features());
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.lr = cfg.lr;

  const fs::path dir = experiment_dir(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());
  write_labels(dir / "labels.txt", g.labels);

  std::optional<EdgeSplit> shared_split;
  std::optional<GraphInputs> shared_inputs;
  if (!cfg.resplit_per_run) {
    shared_split = split_edges(g, kDefaultValFrac, kDefaultTestFrac, cfg.split_seed);
    save_split(dir / "split.txt", *shared_split);
    shared_inputs = prepare_inputs(cfg.model, g.features, shared_split->train_pos);
  }
  log::info("{} / {}: {} runs, {} epochs, lr {}, features {}, {} job(s)", cfg.dataset, to_string(cfg.model), cfg.runs,
            cfg.epochs, cfg.lr, to_string(norm), cfg.jobs);

  std::vector<double> auc(cfg.runs), ap(cfg.runs);
  std::vector<std::exception_ptr> errors(cfg.runs);
  ad::Tensor first_embedding;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.runs; i = next++) {
      try {
        EdgeSplit own;
        GraphInputs own_inputs;
        const EdgeSplit* split = shared_split ? &*shared_split : nullptr;
        const GraphInputs* inputs = shared_inputs ? &*shared_inputs : nullptr;
        if (!split) {
          own = split_edges(g, kDefaultValFrac, kDefaultTestFrac, cfg.split_seed + i);
          save_split(dir / fmt::format("split_{:03}.txt", i), own);
          own_inputs = prepare_inputs(cfg.model, g.features, own.train_pos);
          split = &own;
          inputs = &own_inputs;
        }
        const TrainResult res = train_run(g, *split, *inputs, mc, tc, cfg.run_seed + i);
        const LinkScores s = evaluate_split(res.embedding, split->test_pos, split->test_neg);
        auc[i] = s.auc;
        ap[i] = s.ap;
        write_trace_csv(dir / fmt::format("run_{:03}_trace.csv", i), res.trace);
        if (i == 0) {
          save_tensors(dir / "embedding.lbnt", {{"embedding", res.embedding}});
          first_embedding = res.embedding;
        }
        log::info("run {}: auc {:.4f} ap {:.4f}", i, s.auc, s.ap);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(cfg.jobs, cfg.runs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < cfg.runs; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("run {}: {}", i, e.what()));
    }
  }

  RunReport report = summarize_runs(cfg.dataset, to_string(cfg.model), auc, ap, cfg.bootstrap_resamples,
                                    cfg.bootstrap_seed);
  write_text(dir / "report.json", report_json(cfg, report));
  log::info("{} / {}: auc {} ap {}", cfg.dataset, to_string(cfg.model),
            format_cell(report.mean_auc, report.ci95_auc.half_width()),
            format_cell(report.mean_ap, report.ci95_ap.half_width()));

  if (cfg.emit_tsne) {
    ad::Tensor x = first_embedding;
    std::vector<int> labels = g.labels;
    if (g.num_nodes > kMaxTsnePoints) {
      Rng rng = Rng(cfg.run_seed).split(7);
      const auto keep = stratified_subsample(g.labels, kMaxTsnePoints, rng);
      const std::size_t d = x.cols();
      std::vector<double> rows;
      rows.reserve(keep.size() * d);
      labels.clear();
      for (std::size_t k : keep) {
        for (std::size_t c = 0; c < d; ++c) rows.push_back(x.at(k, c));
        labels.push_back(g.labels[k]);
      }
      x = ad::Tensor::constant({keep.size(), d}, std::move(rows));
      log::info("t-SNE on a stratified subset of {} nodes", keep.size());
    }
    TsneConfig tcfg;
    tcfg.seed = cfg.run_seed;
    const Projection p = tsne_project(x, labels, tcfg);
    emit_scatter(p, dir / "tsne.csv", ScatterFormat::csv);
    emit_scatter(p, dir / "tsne.svg", ScatterFormat::svg, cfg.dataset + " " + to_string(cfg.model));
  }
  return report;
}

std::string format_cell(double mean, double half_width) { return fmt::format("{:.4f} ± {:.4f}", mean, half_width); }

namespace {

std::size_t display_width(const std::string& s) {
  // Count code points; every cell character is single-width.
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width > display_width(s) ? width - display_width(s) : 0, ' ');
}

std::string aligned(const std::string& title, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], display_width(r[c]));
  std::string out = title + "\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::string line;
    for (std::size_t c = 0; c < rows[k].size(); ++c) line += (c ? "  " : "") + pad(rows[k][c], widths[c]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (k == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c ? 2 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

std::string csv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + r[c];
    out += "\n";
  }
  return out;
}

}  // namespace

Tables render_tables(const std::vector<StoredReport>& reports) {
  const std::vector<ModelKind> model_order{ModelKind::gcn, ModelKind::sage, ModelKind::gat, ModelKind::vgae};
  std::map<std::pair<std::string, std::string>, const StoredReport*> cells;
  std::set<std::string> dataset_set;
  std::set<ModelKind> model_set;
  for (const auto& s : reports) {
    const auto key = std::make_pair(to_string(s.config.model), s.config.dataset);
    if (!cells.emplace(key, &s).second) {
      throw MetricError(fmt::format("duplicate report for model {} on {}", key.first, key.second));
    }
    dataset_set.insert(s.config.dataset);
    model_set.insert(s.config.model);
  }
  std::vector<std::string> datasets;
  for (const auto& d : kDatasets)
    if (dataset_set.count(d)) datasets.push_back(d);
  for (const auto& d : dataset_set)
    if (std::find(kDatasets.begin(), kDatasets.end(), d) == kDatasets.end()) datasets.push_back(d);
  std::vector<std::string> models;
  for (auto m : model_order)
    if (model_set.count(m)) models.push_back(to_string(m));

  Tables t;
  std::vector<std::vector<std::string>> summary{
      {"model", "dataset", "mean_auc", "auc_ci_halfwidth", "mean_ap", "ap_ci_halfwidth", "runs", "seed", "split_seed"}};
  std::vector<std::string> header{"model"};
  header.insert(header.end(), datasets.begin(), datasets.end());
  std::vector<std::vector<std::string>> auc_grid{header}, ap_grid{header};
  for (const auto& m : models) {
    std::vector<std::string> auc_row{m}, ap_row{m};
    for (const auto& d : datasets) {
      const auto it = cells.find({m, d});
      if (it == cells.end()) {
        auc_row.push_back("-");
        ap_row.push_back("-");
        ++t.missing_cells;
        log::warn("no report for model {} on {}", m, d);
        continue;
      }
      const RunReport& r = it->second->report;
      const ExperimentConfig& c = it->second->config;
      auc_row.push_back(format_cell(r.mean_auc, r.ci95_auc.half_width()));
      ap_row.push_back(format_cell(r.mean_ap, r.ci95_ap.half_width()));
      summary.push_back({m, d, fmt::format("{:.17g}", r.mean_auc), fmt::format("{:.17g}", r.ci95_auc.half_width()),
                         fmt::format("{:.17g}", r.mean_ap), fmt::format("{:.17g}", r.ci95_ap.half_width()),
                         std::to_string(r.auc.size()), std::to_string(c.run_seed), std::to_string(c.split_seed)});
    }
    auc_grid.push_back(auc_row);
    ap_grid.push_back(ap_row);
  }
  t.summary_csv = csv(summary);
  t.auc_csv = csv(auc_grid);
  t.ap_csv = csv(ap_grid);
  if (models.empty()) {
    t.auc_text = "AUC\n(no reports)\n";
    t.ap_text = "Average precision\n(no reports)\n";
  } else {
    t.auc_text = aligned("AUC (mean ± 95% CI half-width)", auc_grid);
    t.ap_text = aligned("Average precision (mean ± 95% CI half-width)", ap_grid);
  }
  return t;
}

void write_tables(const Tables& t, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw FileError("cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "summary.csv", t.summary_csv);
  write_text(out_dir / "auc_table.csv", t.auc_csv);
  write_text(out_dir / "ap_table.csv", t.ap_csv);
  write_text(out_dir / "auc_table.txt", t.auc_text);
  write_text(out_dir / "ap_table.txt", t.ap_text);
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
}

}  // namespace linkbench
