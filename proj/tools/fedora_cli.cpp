// Command-line front end: data generation, training, unlearning, audits and
// the model-difference bound check, driven by a JSON config with dotted-key
// overrides.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedora/attacks.hpp"
#include "fedora/baselines.hpp"
#include "fedora/dataset.hpp"
#include "fedora/errors.hpp"
#include "fedora/experiment.hpp"
#include "fedora/optimizer.hpp"
#include "fedora/theory.hpp"
#include "fedora/vfl.hpp"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fedora::ExperimentConfig load_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
  json j = fedora::load_config_file(path);
  for (const std::string& o : overrides) fedora::apply_override(j, o);
  return fedora::parse_experiment_config(j);
}

void write_dataset_csv(const fedora::VerticalDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw fedora::IoError("gen-data: cannot write " + path);
  const fedora::DenseTensor features = data.global_features();
  for (std::size_t j = 0; j < features.cols(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t j = 0; j < features.cols(); ++j) out << fmt(features(i, j)) << ',';
    out << data.labels[i] << '\n';
  }
  if (!out) throw fedora::IoError("gen-data: write failed for " + path);
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const fedora::DivergenceError& e) {
    std::cerr << "divergence error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const fedora::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fedora::ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertical federated unlearning lab"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV");
  std::string gen_kind = "tabular", gen_out = "data.csv";
  int gen_classes = 5;
  std::size_t gen_per_class = 1000, gen_features = 12, gen_h = 16, gen_w = 16;
  double gen_separation = 2.2, gen_noise = 0.1;
  std::uint64_t gen_seed = 1;
  gen->add_option("--kind", gen_kind, "tabular or images");
  gen->add_option("--out", gen_out, "output CSV path");
  gen->add_option("--classes", gen_classes);
  gen->add_option("--per-class", gen_per_class);
  gen->add_option("--features", gen_features);
  gen->add_option("--separation", gen_separation);
  gen->add_option("--noise", gen_noise);
  gen->add_option("--height", gen_h);
  gen->add_option("--width", gen_w);
  gen->add_option("--seed", gen_seed);

  // shared config options
  std::string config_path;
  std::vector<std::string> overrides;

  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->required();
    cmd->add_option("--set", overrides, "dotted-key override, e.g. training.epochs=80");
  };

  auto* train_cmd = app.add_subcommand("train", "Train the original split model");
  std::string train_out = "model.json";
  add_config_opts(train_cmd);
  train_cmd->add_option("--out-model", train_out);

  auto* unlearn_cmd = app.add_subcommand("unlearn", "Unlearn from a trained model");
  std::string unlearn_model_in = "model.json", unlearn_model_out = "unlearned.json";
  std::string unlearn_trace = "trace.csv";
  add_config_opts(unlearn_cmd);
  unlearn_cmd->add_option("--model", unlearn_model_in);
  unlearn_cmd->add_option("--out-model", unlearn_model_out);
  unlearn_cmd->add_option("--trace", unlearn_trace);

  auto* audit_cmd = app.add_subcommand("audit", "Audit original vs unlearned model");
  std::string audit_model_in = "model.json", audit_unlearned_in = "unlearned.json";
  std::string audit_report = "audit.json";
  add_config_opts(audit_cmd);
  audit_cmd->add_option("--model", audit_model_in);
  audit_cmd->add_option("--unlearned", audit_unlearned_in);
  audit_cmd->add_option("--report", audit_report);

  auto* run_cmd = app.add_subcommand("run", "Full pipeline: train, unlearn, audit, export");
  std::string run_out_dir;
  add_config_opts(run_cmd);
  run_cmd->add_option("--out-dir", run_out_dir, "overrides output.dir");

  auto* theory_cmd = app.add_subcommand("theory-check", "Model-difference bound verification");
  std::size_t th_n = 2000, th_d = 20, th_k = 500, th_batch = 128;
  double th_lambda = 1.0, th_fraction = 0.1, th_sigma0 = 1e-3, th_omega = 2.0;
  std::uint64_t th_seed = 7;
  std::string th_out = "bound_trace.csv";
  theory_cmd->add_option("--n", th_n);
  theory_cmd->add_option("--d", th_d);
  theory_cmd->add_option("--lambda", th_lambda);
  theory_cmd->add_option("--iterations", th_k);
  theory_cmd->add_option("--batch", th_batch);
  theory_cmd->add_option("--unlearn-fraction", th_fraction);
  theory_cmd->add_option("--sigma0", th_sigma0);
  theory_cmd->add_option("--omega", th_omega);
  theory_cmd->add_option("--seed", th_seed);
  theory_cmd->add_option("--out", th_out);

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    return run_guarded([&] {
      fedora::VerticalDataset data =
          gen_kind == "images"
              ? fedora::gen_images(gen_classes, gen_per_class, gen_h, gen_w, gen_noise, gen_seed)
              : fedora::gen_tabular(gen_classes, gen_per_class, gen_features, gen_separation,
                                    gen_seed);
      write_dataset_csv(data, gen_out);
      std::cout << "wrote " << data.num_rows() << " rows to " << gen_out << '\n';
      return 0;
    });
  }

  if (run_cmd->parsed()) {
    return run_guarded([&] {
      fedora::ExperimentConfig cfg = load_config(config_path, overrides);
      if (!run_out_dir.empty()) cfg.out_dir = run_out_dir;
      fedora::MetricsReport report = fedora::run_experiment(cfg);
      std::cout << fedora::report_to_json(report).dump(2) << '\n';
      return 0;
    });
  }

  if (theory_cmd->parsed()) {
    return run_guarded([&] {
      fedora::ConvexInstance inst = fedora::build_convex_instance(th_n, th_d, th_lambda, th_seed);
      fedora::PartitionResult part = fedora::convex_partition(inst, th_fraction, 1, th_seed + 1);
      fedora::TheoryConfig tc;
      tc.batch_size = th_batch;
      tc.sigma0 = th_sigma0;
      tc.omega_weight = th_omega;
      tc.seed = th_seed;
      fedora::BoundTrace trace = fedora::run_bound_trace(inst, part, tc, th_k);

      std::ofstream out(th_out);
      if (!out) throw fedora::IoError("theory-check: cannot write " + th_out);
      out << "k,e_k,bound_k,tau_k,sigma_k\n";
      for (std::size_t k = 0; k < trace.model_difference.size(); ++k) {
        out << k << ',' << fmt(trace.model_difference[k]) << ',' << fmt(trace.bound[k]) << ','
            << fmt(trace.tau_values[k]) << ',' << fmt(trace.sigma_values[k]) << '\n';
      }
      std::cout << "mu=" << fmt(inst.mu) << " L=" << fmt(inst.lipschitz)
                << " sigma_r=" << fmt(inst.sigma_r) << " G=" << fmt(inst.grad_bound)
                << " omega_max=" << fmt(inst.omega_max) << " tau=" << fmt(trace.tau)
                << " bias=" << fmt(trace.bias) << '\n';
      std::cout << "violations: " << trace.violation_count << " / "
                << trace.model_difference.size() << '\n';
      return trace.violation ? 1 : 0;
    });
  }

  // train / unlearn / audit share the deterministic preamble through the
  // experiment config; models travel via JSON files.
  return run_guarded([&] {
    fedora::ExperimentConfig cfg = load_config(config_path, overrides);
    fedora::ExperimentSetup setup = fedora::prepare_experiment(cfg);
    const fedora::VerticalDataset& train = setup.train;
    const fedora::VerticalDataset& test = setup.test;
    const fedora::PartitionResult& partition = setup.partition;
    const std::vector<fedora::PartySpec>& specs = setup.specs;

    if (train_cmd->parsed()) {
      fedora::SplitModel model = fedora::build_split_model(
          specs, static_cast<std::size_t>(train.num_classes), cfg.top_hidden, cfg.train_seed);
      fedora::TrainOptions opts;
      opts.epochs = cfg.epochs;
      opts.lr = cfg.lr;
      opts.batch_size = cfg.train_batch;
      opts.seed = cfg.train_seed;
      opts.noise_std = cfg.embedding_noise_std;
      fedora::vfl_train(model, train, opts);
      fedora::save_model(model, train_out);
      const std::vector<std::size_t> test_rows = fedora::all_rows(test);
      std::cout << "test_acc=" << fmt(fedora::accuracy(model, test, test_rows)) << '\n';
      return 0;
    }

    if (unlearn_cmd->parsed()) {
      fedora::SplitModel model = fedora::load_model(unlearn_model_in);
      if (cfg.method == "fedora") {
        fedora::UnlearnResult res = fedora::fedora_unlearn(model, train, partition, cfg.fedora);
        fedora::write_unlearn_trace(res.trace, unlearn_trace);
        fedora::save_model(res.model, unlearn_model_out);
      } else if (cfg.method == "retrain") {
        fedora::BaselineConfig bc = cfg.baseline;
        bc.method = fedora::BaselineMethod::kRetrain;
        fedora::SplitModel out = fedora::retrain(train, partition, specs, cfg.top_hidden, bc);
        fedora::save_model(out, unlearn_model_out);
      } else {
        fedora::BaselineConfig bc = cfg.baseline;
        bc.method = fedora::BaselineMethod::kGradientAscent;
        fedora::SplitModel out = fedora::gradient_ascent_unlearn(model, train, partition, bc);
        fedora::save_model(out, unlearn_model_out);
      }
      std::cout << "wrote " << unlearn_model_out << '\n';
      return 0;
    }

    // audit
    fedora::SplitModel original = fedora::load_model(audit_model_in);
    fedora::SplitModel unlearned = fedora::load_model(audit_unlearned_in);
    const std::vector<std::size_t> test_rows = fedora::all_rows(test);
    const std::vector<std::size_t> train_rows = fedora::all_rows(train);

    nlohmann::json j;
    j["test_acc"] = fedora::accuracy(unlearned, test, test_rows);
    j["unlearn_acc"] = fedora::accuracy(unlearned, train, partition.unlearn_rows);
    j["test_acc_pre"] = fedora::accuracy(original, test, test_rows);
    j["unlearn_acc_pre"] = fedora::accuracy(original, train, partition.unlearn_rows);
    if (cfg.audit_mia) {
      fedora::ShadowAttackModel attack =
          fedora::mia_fit(original, train, train_rows, test, test_rows, cfg.attack);
      j["mia_asr_pre"] = fedora::mia_asr(attack, original, train, partition.unlearn_rows);
      j["mia_asr"] = fedora::mia_asr(attack, unlearned, train, partition.unlearn_rows);
    }
    if (cfg.audit_backdoor) {
      j["bd_asr_pre"] =
          fedora::bd_asr(original, train, partition.unlearn_rows, cfg.trigger.target_label);
      j["bd_asr"] =
          fedora::bd_asr(unlearned, train, partition.unlearn_rows, cfg.trigger.target_label);
    }
    std::ofstream out(audit_report);
    if (!out) throw fedora::IoError("audit: cannot write " + audit_report);
    out << j.dump(2) << '\n';
    std::cout << j.dump(2) << '\n';
    return 0;
  });
}
