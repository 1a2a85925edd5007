#pragma once

// Experiment configuration, orchestration and result persistence.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linkbench/metrics.hpp"
#include "linkbench/models.hpp"

namespace linkbench {

inline const std::vector<std::string> kDatasets{"cora", "citeseer", "pubmed", "wikics"};

struct ExperimentConfig {
  std::string dataset = "cora";
  ModelKind model = ModelKind::gcn;
  std::size_t runs = 50;
  std::size_t epochs = 200;
  double lr = 0.01;  // 0.001 for gat on wikics unless set explicitly
  std::uint64_t split_seed = 0;
  std::uint64_t run_seed = 0;  // run i uses run_seed + i
  std::uint64_t bootstrap_seed = 0;
  std::size_t bootstrap_resamples = kDefaultBootstrapResamples;
  std::size_t jobs = 1;
  bool emit_tsne = false;
  bool resplit_per_run = false;  // split i uses split_seed + i
  FeatureNorm feature_norm = FeatureNorm::automatic;
  std::filesystem::path out_dir = "results";
  std::filesystem::path data_dir;  // empty: $LINKBENCH_DATA, then ./data
};

/// Recognized keys, as used both in config files and (with '-' for '_') as flags.
const std::vector<std::string>& config_keys();

/// Reads `key = value` lines; `#` starts a comment. Throws ConfigError naming
/// the line for malformed input.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Defaults, then file values, then flag values. Unknown keys and invalid
/// values throw ConfigError naming the key.
ExperimentConfig parse_config(const std::map<std::string, std::string>& flags,
                              const std::optional<std::filesystem::path>& config_file = std::nullopt);

/// The experiment's directory under out_dir: <dataset>_<model>.
std::filesystem::path experiment_dir(const ExperimentConfig& cfg);

struct StoredReport {
  ExperimentConfig config;
  RunReport report;
};

/// Loads the dataset, splits, trains cfg.runs models on up to cfg.jobs threads,
/// and writes split(s), per-run traces and embeddings, labels, report.json and
/// optionally a t-SNE scatter of run 0 into experiment_dir(cfg).
RunReport run_experiment(const ExperimentConfig& cfg);

/// report.json text. Holds no timing, so equal inputs give equal bytes.
std::string report_json(const ExperimentConfig& cfg, const RunReport& report);
StoredReport parse_report_json(const std::string& text);
StoredReport load_report(const std::filesystem::path& path);
/// All report.json files below `dir`, sorted by path.
std::vector<StoredReport> load_reports(const std::filesystem::path& dir);

/// "0.9273 ± 0.0051"
std::string format_cell(double mean, double half_width);

struct Tables {
  std::string summary_csv;  // model,dataset,mean_auc,auc_ci_halfwidth,mean_ap,ap_ci_halfwidth,runs,seed
  std::string auc_csv, ap_csv;  // model x dataset grids
  std::string auc_text, ap_text;
  std::size_t missing_cells = 0;
};

/// Grids span every model and dataset present. Missing cells read "-";
/// a repeated (model, dataset) pair throws MetricError.
Tables render_tables(const std::vector<StoredReport>& reports);
void write_tables(const Tables& t, const std::filesystem::path& out_dir);

/// One integer per line.
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_labels(const std::filesystem::path& path);

/// Raises glibc's mmap threshold so the large per-epoch temporaries are
/// recycled instead of mapped and unmapped every time.
void tune_allocator();

}  // namespace linkbench
