#include <CLI11.hpp>

#include <cstdio>
#include <fmt/core.h>
#include <map>
#include <optional>
#include <string>

#include "linkbench/error.hpp"
#include "linkbench/harness.hpp"
#include "linkbench/log.hpp"
#include "linkbench/models.hpp"
#include "linkbench/tsne.hpp"

using namespace linkbench;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
      return kExitUsage;
    case ErrorKind::data:
    case ErrorKind::split:
    case ErrorKind::sampling:
    case ErrorKind::io:
      return kExitData;
    default:
      return kExitNumeric;
  }
}

struct RunOptions {
  std::optional<std::string> config;
  std::map<std::string, std::string> flags;
};

int cmd_tsne(const fs::path& embedding, const fs::path& labels_path, const fs::path& out, const TsneConfig& cfg) {
  const auto tensors = load_tensors(embedding);
  if (tensors.empty()) throw DataError(embedding.string() + ": no tensors");
  const ad::Tensor& x = tensors.front().second;
  const auto labels = read_labels(labels_path);
  if (labels.size() != x.rows()) {
    throw DataError(fmt::format("{} has {} labels for {} embedding rows", labels_path.string(), labels.size(), x.rows()));
  }
  ad::Tensor input = x;
  std::vector<int> kept = labels;
  if (x.rows() > kMaxTsnePoints) {
    Rng rng = Rng(cfg.seed).split(7);
    const auto idx = stratified_subsample(labels, kMaxTsnePoints, rng);
    std::vector<double> rows;
    kept.clear();
    for (std::size_t k : idx) {
      for (std::size_t c = 0; c < x.cols(); ++c) rows.push_back(x.at(k, c));
      kept.push_back(labels[k]);
    }
    input = ad::Tensor::constant({idx.size(), x.cols()}, std::move(rows));
  }
  const Projection p = tsne_project(input, kept, cfg);
  const auto format = out.extension() == ".csv" ? ScatterFormat::csv : ScatterFormat::svg;
  emit_scatter(p, out, format, embedding.stem().string());
  log::info("wrote {} ({} points, final KL {:.4f})", out.string(), kept.size(), p.kl_trace.back().second);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Link prediction benchmark for graph neural networks"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors");

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Train and evaluate one model on one dataset");
  run_cmd->add_option("--config", run.config, "key = value config file");
  // Every config key is also a flag; given flags override the file.
  for (const auto& key : config_keys()) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    if (key == "emit_tsne" || key == "resplit_per_run") {
      run_cmd->add_flag_callback(flag, [&run, key] { run.flags[key] = "true"; });
    } else {
      run_cmd->add_option_function<std::string>(flag, [&run, key](const std::string& v) { run.flags[key] = v; });
    }
  }

  std::string tables_in, tables_out;
  auto* tables_cmd = app.add_subcommand("tables", "Render AUC and AP tables from saved reports");
  tables_cmd->add_option("--in", tables_in, "Directory searched for report.json files")->required();
  tables_cmd->add_option("--out", tables_out, "Output directory")->required();

  std::string tsne_embedding, tsne_labels, tsne_out;
  TsneConfig tsne_cfg;
  auto* tsne_cmd = app.add_subcommand("tsne", "Project a saved embedding to 2-D");
  tsne_cmd->add_option("--embedding", tsne_embedding, "Embedding file written by run")->required();
  tsne_cmd->add_option("--labels", tsne_labels, "One integer label per line")->required();
  tsne_cmd->add_option("--out", tsne_out, "Output .svg or .csv")->required();
  tsne_cmd->add_option("--perplexity", tsne_cfg.perplexity);
  tsne_cmd->add_option("--iterations", tsne_cfg.iterations);
  tsne_cmd->add_option("--seed", tsne_cfg.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  log::set_level(quiet ? log::Level::quiet : verbose ? log::Level::debug : log::Level::info);

  try {
    if (*run_cmd) {
      std::optional<fs::path> file;
      if (run.config) file = *run.config;
      const ExperimentConfig cfg = parse_config(run.flags, file);
      const RunReport r = run_experiment(cfg);
      fmt::print("{} {} auc {} ap {}\n", r.dataset, r.model, format_cell(r.mean_auc, r.ci95_auc.half_width()),
                 format_cell(r.mean_ap, r.ci95_ap.half_width()));
      return 0;
    }
    if (*tables_cmd) {
      const auto reports = load_reports(tables_in);
      if (reports.empty()) throw DataError("no report.json under " + tables_in);
      const Tables t = render_tables(reports);
      write_tables(t, tables_out);
      fmt::print("{}\n{}", t.auc_text, t.ap_text);
      return 0;
    }
    if (*tsne_cmd) return cmd_tsne(tsne_embedding, tsne_labels, tsne_out, tsne_cfg);
  } catch (const Error& e) {
    fmt::print(stderr, "linkbench: {}\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "linkbench: {}\n", e.what());
    return kExitNumeric;
  }
  return kExitUsage;
}
