#include "fedora/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedora/errors.hpp"

namespace fedora {

void BaselineConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("baseline config: lr must be > 0");
  if (batch_size == 0) throw ConfigError("baseline config: batch_size must be >= 1");
  if (noise_std < 0.0) throw ConfigError("baseline config: noise_std must be >= 0");
}

SplitModel retrain(const VerticalDataset& data, const PartitionResult& partition,
                   const std::vector<PartySpec>& parties, const std::vector<std::size_t>& top_hidden,
                   const BaselineConfig& config) {
  config.validate();
  partition.validate(data.num_rows());
  if (partition.remain_rows.empty()) throw ValidationError("retrain: empty remaining set");

  // D_u is absent from here on: the trainer only ever sees this view.
  VerticalDataset retained = subset(data, partition.remain_rows);

  SplitModel model = build_split_model(parties, static_cast<std::size_t>(data.num_classes),
                                       top_hidden, config.seed);
  TrainOptions opts;
  opts.epochs = config.iterations;
  opts.lr = config.lr;
  opts.batch_size = config.batch_size;
  opts.seed = config.seed;
  opts.noise_std = config.noise_std;
  vfl_train(model, retained, opts);
  return model;
}

SplitModel gradient_ascent_unlearn(const SplitModel& model, const VerticalDataset& data,
                                   const PartitionResult& partition, const BaselineConfig& config) {
  config.validate();
  partition.validate(data.num_rows());
  if (partition.unlearn_rows.empty()) {
    throw ValidationError("gradient_ascent_unlearn: empty unlearning set");
  }
  model.validate();

  SplitModel out = model;
  std::mt19937_64 rng(config.seed);

  std::vector<int> unlearn_labels(partition.unlearn_rows.size());
  for (std::size_t i = 0; i < partition.unlearn_rows.size(); ++i) {
    unlearn_labels[i] = data.labels[partition.unlearn_rows[i]];
  }

  for (std::size_t it = 0; it < config.iterations; ++it) {
    RoundForward fwd = forward_round(out, data, partition.unlearn_rows, config.noise_std,
                                     config.noise_std > 0.0 ? &rng : nullptr);
    SoftmaxXentResult xe = softmax_cross_entropy(fwd.logits, unlearn_labels);
    if (!std::isfinite(xe.loss)) {
      throw DivergenceError("gradient_ascent_unlearn: non-finite loss at iteration " +
                            std::to_string(it));
    }
    ParamSet grads = backward_round(out, data, partition.unlearn_rows, fwd, xe.grad_logits);
    axpy(out.params, config.lr, grads);  // ascent
    for (const DenseTensor* t : tensor_list(out.params)) {
      if (!t->all_finite()) {
        throw DivergenceError("gradient_ascent_unlearn: parameters diverged at iteration " +
                              std::to_string(it));
      }
    }
  }

  if (config.ga_finetune_rounds > 0) {
    std::vector<std::size_t> order = partition.remain_rows;
    for (std::size_t round = 0; round < config.ga_finetune_rounds; ++round) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        std::span<const std::size_t> rows(order.data() + start, end - start);
        std::vector<int> labels(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = data.labels[rows[i]];
        RoundForward fwd = forward_round(out, data, rows, config.noise_std,
                                         config.noise_std > 0.0 ? &rng : nullptr);
        SoftmaxXentResult xe = softmax_cross_entropy(fwd.logits, labels);
        if (!std::isfinite(xe.loss)) {
          throw DivergenceError("gradient_ascent_unlearn: non-finite fine-tune loss at round " +
                                std::to_string(round));
        }
        ParamSet grads = backward_round(out, data, rows, fwd, xe.grad_logits);
        axpy(out.params, -config.lr, grads);
      }
    }
  }
  return out;
}

}  // namespace fedora
