#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedora/attacks.hpp"
#include "fedora/baselines.hpp"
#include "fedora/dataset.hpp"
#include "fedora/optimizer.hpp"
#include "fedora/vfl.hpp"

namespace fedora {

// Parsed experiment configuration; `raw` keeps the input (post command-line
// overrides) and is echoed verbatim into the report.
struct ExperimentConfig {
  nlohmann::json raw;

  // dataset
  std::string dataset_kind = "tabular";  // tabular | images | csv
  int classes = 5;
  std::size_t per_class = 1000;
  std::size_t features = 12;
  double separation = 2.2;
  double image_noise = 0.1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::string csv_path;
  std::string label_column = "label";
  char delimiter = ',';
  bool standardize = true;
  std::size_t parties = 3;
  std::vector<std::pair<std::size_t, std::size_t>> slices;  // optional explicit slices
  std::vector<std::size_t> bottom_arch = {16};
  std::vector<std::size_t> top_hidden = {32};
  double test_fraction = 0.2;
  std::uint64_t data_seed = 1;

  // training
  std::size_t epochs = 60;
  double lr = 0.05;
  std::size_t train_batch = 64;
  std::uint64_t train_seed = 2;

  // unlearning
  std::string method = "fedora";  // fedora | retrain | ga
  UnlearnRequest request{{1}, 0.5};
  std::uint64_t unlearn_seed = 3;
  UnlearnConfig fedora;
  BaselineConfig baseline;

  // audit
  bool audit_mia = true;
  bool audit_backdoor = false;
  TriggerSpec trigger;
  MiaFitOptions attack;

  // channel / data noise
  double embedding_noise_std = 0.0;
  int noniid_party = -1;
  double noniid_std = 0.0;
  std::uint64_t noise_seed = 9;

  // output
  std::string out_dir = "out";
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json load_config_file(const std::string& path);
// Apply a dotted-key override like "training.epochs=80" to a config tree.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Deterministic pipeline preamble shared by `run` and the step-by-step
// subcommands: dataset, train/test split, unlearning partition, optional
// backdoor poisoning, party slicing and PSI-lite alignment, non-IID noise.
struct ExperimentSetup {
  VerticalDataset train;
  VerticalDataset test;
  PartitionResult partition;
  std::vector<PartySpec> specs;
};

ExperimentSetup prepare_experiment(const ExperimentConfig& config);

struct MetricsReport {
  std::string method;
  double test_acc = 0.0;
  double unlearn_acc = 0.0;
  double test_acc_pre = 0.0;
  double unlearn_acc_pre = 0.0;
  std::optional<double> mia_asr;
  std::optional<double> mia_asr_pre;
  std::optional<double> bd_asr;
  std::optional<double> bd_asr_pre;
  std::size_t rounds = 0;
  double seconds_per_round = 0.0;  // wall clock, excluded from determinism
  std::string trace_path;
  nlohmann::json config_echo;
};

nlohmann::json report_to_json(const MetricsReport& report);

// Full pipeline: data -> train -> unlearn -> audit -> export. Writes
// report.json and trace.csv under config.out_dir; partial outputs are
// removed on failure. Deterministic given the config's seeds.
MetricsReport run_experiment(const ExperimentConfig& config);

// format is "json" or "csv"; csv appends one row per run when append is set.
void export_metrics(const MetricsReport& report, const std::string& format,
                    const std::string& path, bool append = false);

void save_model(const SplitModel& model, const std::string& path);
SplitModel load_model(const std::string& path);

void write_unlearn_trace(const std::vector<UnlearnTraceRow>& trace, const std::string& path);

}  // namespace fedora
