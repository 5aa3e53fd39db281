#include "fedora/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "fedora/errors.hpp"

namespace fedora {

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  return j;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override has an empty path segment: " + assignment);
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    node = &(*node)[parts[i]];
    if (!node->is_object() && !node->is_null()) {
      throw ConfigError("override path crosses a non-object at '" + parts[i] + "'");
    }
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // plain string
  (*node)[parts.back()] = parsed;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig c;
  c.raw = j;

  const json dataset = j.value("dataset", json::object());
  c.dataset_kind = get_or<std::string>(dataset, "kind", c.dataset_kind);
  if (c.dataset_kind != "tabular" && c.dataset_kind != "images" && c.dataset_kind != "csv") {
    throw ConfigError("dataset.kind must be tabular, images or csv");
  }
  c.classes = get_or<int>(dataset, "classes", c.classes);
  c.per_class = get_or<std::size_t>(dataset, "per_class", c.per_class);
  c.features = get_or<std::size_t>(dataset, "features", c.features);
  c.separation = get_or<double>(dataset, "separation", c.separation);
  c.image_noise = get_or<double>(dataset, "noise", c.image_noise);
  c.height = get_or<std::size_t>(dataset, "height", c.height);
  c.width = get_or<std::size_t>(dataset, "width", c.width);
  c.csv_path = get_or<std::string>(dataset, "path", c.csv_path);
  c.label_column = get_or<std::string>(dataset, "label_column", c.label_column);
  const std::string delim = get_or<std::string>(dataset, "delimiter", std::string(1, c.delimiter));
  if (delim.size() != 1) throw ConfigError("dataset.delimiter must be one character");
  c.delimiter = delim[0];
  c.standardize = get_or<bool>(dataset, "standardize", c.standardize);
  c.parties = get_or<std::size_t>(dataset, "parties", c.parties);
  if (dataset.contains("slices")) {
    for (const json& s : dataset.at("slices")) {
      if (!s.is_array() || s.size() != 2) {
        throw ConfigError("dataset.slices entries must be [begin, end] pairs");
      }
      c.slices.emplace_back(s[0].get<std::size_t>(), s[1].get<std::size_t>());
    }
  }
  c.bottom_arch = get_or<std::vector<std::size_t>>(dataset, "bottom_arch", c.bottom_arch);
  c.top_hidden = get_or<std::vector<std::size_t>>(dataset, "top_hidden", c.top_hidden);
  c.test_fraction = get_or<double>(dataset, "test_fraction", c.test_fraction);
  c.data_seed = get_or<std::uint64_t>(dataset, "seed", c.data_seed);

  const json training = j.value("training", json::object());
  c.epochs = get_or<std::size_t>(training, "epochs", c.epochs);
  c.lr = get_or<double>(training, "lr", c.lr);
  c.train_batch = get_or<std::size_t>(training, "batch_size", c.train_batch);
  c.train_seed = get_or<std::uint64_t>(training, "seed", c.train_seed);

  const json unlearn = j.value("unlearn", json::object());
  c.method = get_or<std::string>(unlearn, "method", c.method);
  if (c.method != "fedora" && c.method != "retrain" && c.method != "ga") {
    throw ConfigError("unlearn.method must be fedora, retrain or ga");
  }
  c.request.classes = get_or<std::vector<int>>(unlearn, "classes", c.request.classes);
  c.request.fraction = get_or<double>(unlearn, "fraction", c.request.fraction);
  c.unlearn_seed = get_or<std::uint64_t>(unlearn, "seed", c.unlearn_seed);

  const json f = unlearn.value("fedora", json::object());
  c.fedora.gamma = get_or<double>(f, "gamma", c.fedora.gamma);
  c.fedora.omega_weight = get_or<double>(f, "omega", c.fedora.omega_weight);
  c.fedora.rho = get_or<double>(f, "rho", c.fedora.rho);
  c.fedora.delta = get_or<double>(f, "delta", c.fedora.delta);
  c.fedora.batch_size = get_or<std::size_t>(f, "batch_size", c.fedora.batch_size);
  c.fedora.iterations = get_or<std::size_t>(f, "iterations", c.fedora.iterations);
  c.fedora.alpha = get_or<double>(f, "alpha", c.fedora.alpha);
  c.fedora.beta = get_or<double>(f, "beta", c.fedora.beta);
  c.fedora.kappa_i = get_or<double>(f, "kappa_i", c.fedora.kappa_i);
  c.fedora.kappa_d = get_or<double>(f, "kappa_d", c.fedora.kappa_d);
  c.fedora.tau0 = get_or<double>(f, "tau0", c.fedora.tau0);
  c.fedora.sigma0 = get_or<double>(f, "sigma0", c.fedora.sigma0);
  c.fedora.tau_max = get_or<double>(f, "tau_max", c.fedora.tau_max);
  c.fedora.sigma_max = get_or<double>(f, "sigma_max", c.fedora.sigma_max);
  c.fedora.seed = c.unlearn_seed;

  const json b = unlearn.value("baseline", json::object());
  c.baseline.method = c.method == "ga" ? BaselineMethod::kGradientAscent : BaselineMethod::kRetrain;
  c.baseline.iterations = get_or<std::size_t>(b, "iterations", c.baseline.iterations);
  c.baseline.lr = get_or<double>(b, "lr", c.baseline.lr);
  c.baseline.batch_size = get_or<std::size_t>(b, "batch_size", c.baseline.batch_size);
  c.baseline.ga_finetune_rounds =
      get_or<std::size_t>(b, "ga_finetune_rounds", c.baseline.ga_finetune_rounds);
  c.baseline.seed = c.unlearn_seed;

  const json audit = j.value("audit", json::object());
  c.audit_mia = get_or<bool>(audit, "mia", c.audit_mia);
  c.audit_backdoor = get_or<bool>(audit, "backdoor", c.audit_backdoor);
  const json trig = audit.value("trigger", json::object());
  c.trigger.patch = get_or<std::size_t>(trig, "patch", c.trigger.patch);
  c.trigger.target_label = get_or<int>(trig, "target", c.trigger.target_label);
  c.trigger.pixel_value = get_or<double>(trig, "pixel_value", c.trigger.pixel_value);
  const json attack = audit.value("attack", json::object());
  c.attack.iterations = get_or<std::size_t>(attack, "iterations", c.attack.iterations);
  c.attack.lr = get_or<double>(attack, "lr", c.attack.lr);
  c.attack.seed = get_or<std::uint64_t>(attack, "seed", c.attack.seed);

  const json noise = j.value("noise", json::object());
  c.embedding_noise_std = get_or<double>(noise, "embedding_std", c.embedding_noise_std);
  c.noniid_party = get_or<int>(noise, "noniid_party", c.noniid_party);
  c.noniid_std = get_or<double>(noise, "noniid_std", c.noniid_std);
  c.noise_seed = get_or<std::uint64_t>(noise, "seed", c.noise_seed);

  const json output = j.value("output", json::object());
  c.out_dir = get_or<std::string>(output, "dir", c.out_dir);

  c.fedora.noise_std = c.embedding_noise_std;
  c.baseline.noise_std = c.embedding_noise_std;
  return c;
}

namespace {

json mlp_to_json(const MlpParams& p) {
  json layers = json::array();
  for (const MlpLayer& l : p.layers) {
    layers.push_back({{"in", l.weight.rows()},
                      {"out", l.weight.cols()},
                      {"act", l.act == Activation::kRelu ? "relu" : "identity"},
                      {"weight", l.weight.values()},
                      {"bias", l.bias.values()}});
  }
  return {{"layers", layers}};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  for (const json& lj : j.at("layers")) {
    MlpLayer l;
    const std::size_t in = lj.at("in").get<std::size_t>();
    const std::size_t out = lj.at("out").get<std::size_t>();
    const std::string act = lj.at("act").get<std::string>();
    if (act != "relu" && act != "identity") {
      throw ValidationError("model file: unknown activation '" + act + "'");
    }
    l.act = act == "relu" ? Activation::kRelu : Activation::kIdentity;
    l.weight = DenseTensor({in, out}, lj.at("weight").get<std::vector<double>>());
    l.bias = DenseTensor({out}, lj.at("bias").get<std::vector<double>>());
    p.layers.push_back(std::move(l));
  }
  p.validate();
  return p;
}

}  // namespace

void save_model(const SplitModel& model, const std::string& path) {
  json j;
  j["bottoms"] = json::array();
  for (const MlpParams& b : model.params.bottoms) j["bottoms"].push_back(mlp_to_json(b));
  j["top"] = mlp_to_json(model.params.top);
  std::ofstream out(path);
  if (!out) throw IoError("save_model: cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("save_model: write failed for " + path);
}

SplitModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_model: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("load_model: " + path + ": " + e.what());
  }
  SplitModel model;
  for (const json& bj : j.at("bottoms")) model.params.bottoms.push_back(mlp_from_json(bj));
  model.params.top = mlp_from_json(j.at("top"));
  model.validate();
  return model;
}

void write_unlearn_trace(const std::vector<UnlearnTraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("trace: cannot write " + path);
  out << "round,L_u,L_r,tau,sigma,delta_theta\n";
  for (const UnlearnTraceRow& row : trace) {
    out << row.round << ',' << format_double(row.loss_u) << ',' << format_double(row.loss_r)
        << ',' << format_double(row.tau) << ',' << format_double(row.sigma) << ','
        << format_double(row.delta_theta) << '\n';
  }
  if (!out) throw IoError("trace: write failed for " + path);
}

json report_to_json_impl(const MetricsReport& r) {
  json j;
  j["method"] = r.method;
  j["test_acc"] = r.test_acc;
  j["unlearn_acc"] = r.unlearn_acc;
  j["test_acc_pre"] = r.test_acc_pre;
  j["unlearn_acc_pre"] = r.unlearn_acc_pre;
  if (r.mia_asr) j["mia_asr"] = *r.mia_asr;
  if (r.mia_asr_pre) j["mia_asr_pre"] = *r.mia_asr_pre;
  if (r.bd_asr) j["bd_asr"] = *r.bd_asr;
  if (r.bd_asr_pre) j["bd_asr_pre"] = *r.bd_asr_pre;
  j["rounds"] = r.rounds;
  j["seconds_per_round"] = r.seconds_per_round;
  j["trace"] = r.trace_path;
  j["config"] = r.config_echo;
  return j;
}

nlohmann::json report_to_json(const MetricsReport& report) {
  return report_to_json_impl(report);
}

void export_metrics(const MetricsReport& report, const std::string& format,
                    const std::string& path, bool append) {
  if (format == "json") {
    std::ofstream out(path);
    if (!out) throw IoError("export_metrics: cannot write " + path);
    out << report_to_json_impl(report).dump(2) << '\n';
    if (!out) throw IoError("export_metrics: write failed for " + path);
    return;
  }
  if (format == "csv") {
    const bool fresh = !append || !std::filesystem::exists(path);
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("export_metrics: cannot write " + path);
    if (fresh) {
      out << "method,test_acc,unlearn_acc,test_acc_pre,unlearn_acc_pre,"
             "mia_asr,mia_asr_pre,bd_asr,bd_asr_pre,rounds,seconds_per_round\n";
    }
    auto opt = [](const std::optional<double>& v) {
      return v ? format_double(*v) : std::string();
    };
    out << report.method << ',' << format_double(report.test_acc) << ','
        << format_double(report.unlearn_acc) << ',' << format_double(report.test_acc_pre) << ','
        << format_double(report.unlearn_acc_pre) << ',' << opt(report.mia_asr) << ','
        << opt(report.mia_asr_pre) << ',' << opt(report.bd_asr) << ',' << opt(report.bd_asr_pre)
        << ',' << report.rounds << ',' << format_double(report.seconds_per_round) << '\n';
    if (!out) throw IoError("export_metrics: write failed for " + path);
    return;
  }
  throw ValidationError("export_metrics: unknown format '" + format + "'");
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const IngestionError& e) {
    throw IngestionError(std::string(name) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(std::string(name) + ": " + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(name) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(std::string(name) + ": " + e.what());
  } catch (const AlignmentError& e) {
    throw AlignmentError(std::string(name) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  }
}

std::vector<PartySpec> make_party_specs(const ExperimentConfig& c, std::size_t width) {
  std::vector<std::pair<std::size_t, std::size_t>> slices = c.slices;
  if (slices.empty()) {
    if (c.parties == 0) throw ConfigError("dataset.parties must be >= 1");
    if (width < c.parties) throw ConfigError("fewer feature columns than parties");
    const std::size_t base = width / c.parties;
    const std::size_t extra = width % c.parties;
    std::size_t col = 0;
    for (std::size_t p = 0; p < c.parties; ++p) {
      const std::size_t w = base + (p < extra ? 1 : 0);
      slices.emplace_back(col, col + w);
      col += w;
    }
  }
  std::vector<PartySpec> specs;
  for (std::size_t p = 0; p < slices.size(); ++p) {
    PartySpec s;
    s.party_id = static_cast<int>(p);
    s.role = (p + 1 == slices.size()) ? PartyRole::kActive : PartyRole::kPassive;
    s.col_begin = slices[p].first;
    s.col_end = slices[p].second;
    s.bottom_arch = c.bottom_arch;
    specs.push_back(std::move(s));
  }
  validate_party_specs(specs, width);
  return specs;
}

// Stamp the trigger into selected rows of a single-table image dataset and
// overwrite their labels with the target class.
void poison_rows(VerticalDataset& table, const std::vector<std::size_t>& rows,
                 const TriggerSpec& trigger, std::size_t height, std::size_t width) {
  DenseTensor& features = table.party_features.at(0);
  if (features.cols() != height * width) {
    throw DimensionError("backdoor: dataset width does not match the image grid");
  }
  DenseTensor batch({rows.size(), height, width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < height * width; ++k) {
      batch[i * height * width + k] = features(rows[i], k);
    }
  }
  BackdoorBatch triggered = inject_backdoor(batch, trigger);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < height * width; ++k) {
      features(rows[i], k) = triggered.images[i * height * width + k];
    }
    table.labels[rows[i]] = triggered.labels[i];
  }
}

}  // namespace

ExperimentSetup prepare_experiment(const ExperimentConfig& config) {
  // Dataset construction (single logical table).
  VerticalDataset table = stage("dataset", [&] {
    VerticalDataset t;
    if (config.dataset_kind == "tabular") {
      t = gen_tabular(config.classes, config.per_class, config.features, config.separation,
                      config.data_seed);
    } else if (config.dataset_kind == "images") {
      t = gen_images(config.classes, config.per_class, config.height, config.width,
                     config.image_noise, config.data_seed);
    } else {
      CsvOptions opts{config.label_column, config.delimiter, config.standardize};
      t = load_csv(config.csv_path, opts);
    }
    return t;
  });

  TrainTestSplit split = stage("split", [&] {
    return train_test_split(table, config.test_fraction, config.data_seed + 1);
  });

  ExperimentSetup setup;
  setup.partition = stage("partition", [&] {
    return split_unlearn(split.train, config.request, config.unlearn_seed);
  });

  if (config.audit_backdoor) {
    stage("backdoor", [&] {
      if (config.dataset_kind != "images") {
        throw ConfigError("backdoor audit needs dataset.kind = images");
      }
      poison_rows(split.train, setup.partition.unlearn_rows, config.trigger, config.height,
                  config.width);
      return 0;
    });
  }

  // Vertical partitioning into parties + PSI-lite id alignment.
  setup.specs = stage("parties", [&] {
    return make_party_specs(config, split.train.feature_width());
  });
  setup.train = stage("parties", [&] {
    std::vector<std::vector<long long>> id_sets(setup.specs.size(), split.train.sample_ids);
    const std::vector<long long> aligned = psi_align(id_sets);
    if (aligned.size() != split.train.num_rows()) {
      throw AlignmentError("psi-lite lost rows during alignment");
    }
    VerticalDataset t = vertical_partition(split.train, setup.specs);
    if (config.noniid_party >= 0 && config.noniid_std > 0.0) {
      t = noniid_perturb(t, config.noniid_party, config.noniid_std, config.noise_seed);
    }
    return t;
  });
  setup.test = stage("parties", [&] {
    VerticalDataset t = vertical_partition(split.test, setup.specs);
    if (config.noniid_party >= 0 && config.noniid_std > 0.0) {
      t = noniid_perturb(t, config.noniid_party, config.noniid_std, config.noise_seed + 1);
    }
    return t;
  });
  return setup;
}

MetricsReport run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  const fs::path out_dir(config.out_dir);
  const fs::path report_path = out_dir / "report.json";
  const fs::path trace_path = out_dir / "trace.csv";

  auto cleanup_partial = [&] {
    std::error_code ec;
    fs::remove(report_path, ec);
    fs::remove(trace_path, ec);
  };

  try {
    ExperimentSetup setup = prepare_experiment(config);
    const VerticalDataset& train = setup.train;
    const VerticalDataset& test = setup.test;
    const PartitionResult& partition = setup.partition;
    const std::vector<PartySpec>& specs = setup.specs;

    // Original training.
    SplitModel original = stage("train", [&] {
      SplitModel model = build_split_model(specs, static_cast<std::size_t>(train.num_classes),
                                           config.top_hidden, config.train_seed);
      TrainOptions opts;
      opts.epochs = config.epochs;
      opts.lr = config.lr;
      opts.batch_size = config.train_batch;
      opts.seed = config.train_seed;
      opts.noise_std = config.embedding_noise_std;
      vfl_train(model, train, opts);
      return model;
    });

    MetricsReport report;
    report.method = config.method;
    report.config_echo = config.raw;
    report.trace_path = trace_path.string();

    const std::vector<std::size_t> test_rows = all_rows(test);
    const std::vector<std::size_t> train_rows = all_rows(train);

    // Pre-unlearning audit.
    std::optional<ShadowAttackModel> attack;
    stage("pre-audit", [&] {
      report.test_acc_pre = accuracy(original, test, test_rows);
      report.unlearn_acc_pre = accuracy(original, train, partition.unlearn_rows);
      if (config.audit_mia) {
        attack = mia_fit(original, train, train_rows, test, test_rows, config.attack);
        report.mia_asr_pre = mia_asr(*attack, original, train, partition.unlearn_rows);
      }
      if (config.audit_backdoor) {
        report.bd_asr_pre = bd_asr(original, train, partition.unlearn_rows,
                                   config.trigger.target_label);
      }
      return 0;
    });

    // Unlearning.
    SplitModel unlearned;
    std::vector<UnlearnTraceRow> trace;
    const auto t0 = std::chrono::steady_clock::now();
    stage("unlearn", [&] {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      if (config.method == "fedora") {
        UnlearnResult res = fedora_unlearn(original, train, partition, config.fedora);
        unlearned = std::move(res.model);
        trace = std::move(res.trace);
        report.rounds = config.fedora.iterations;
      } else if (config.method == "retrain") {
        BaselineConfig bc = config.baseline;
        bc.method = BaselineMethod::kRetrain;
        unlearned = retrain(train, partition, specs, config.top_hidden, bc);
        report.rounds = bc.iterations;
        // Loss history is not part of the retrain contract; record rounds only.
        for (std::size_t k = 0; k < bc.iterations; ++k) {
          trace.push_back({k, nan, nan, bc.lr, nan, nan});
        }
      } else {
        BaselineConfig bc = config.baseline;
        bc.method = BaselineMethod::kGradientAscent;
        unlearned = gradient_ascent_unlearn(original, train, partition, bc);
        report.rounds = bc.iterations + bc.ga_finetune_rounds;
        for (std::size_t k = 0; k < report.rounds; ++k) {
          trace.push_back({k, nan, nan, bc.lr, nan, nan});
        }
      }
      return 0;
    });
    const auto t1 = std::chrono::steady_clock::now();
    report.seconds_per_round =
        report.rounds == 0
            ? 0.0
            : std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(report.rounds);

    // Post-unlearning audit.
    stage("audit", [&] {
      report.test_acc = accuracy(unlearned, test, test_rows);
      report.unlearn_acc = accuracy(unlearned, train, partition.unlearn_rows);
      if (config.audit_mia) {
        report.mia_asr = mia_asr(*attack, unlearned, train, partition.unlearn_rows);
      }
      if (config.audit_backdoor) {
        report.bd_asr = bd_asr(unlearned, train, partition.unlearn_rows,
                               config.trigger.target_label);
      }
      return 0;
    });

    // Export.
    stage("export", [&] {
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      write_unlearn_trace(trace, trace_path.string());
      export_metrics(report, "json", report_path.string());
      return 0;
    });
    return report;
  } catch (...) {
    cleanup_partial();
    throw;
  }
}

}  // namespace fedora
