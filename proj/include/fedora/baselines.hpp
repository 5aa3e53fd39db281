#pragma once

#include <cstdint>
#include <vector>

#include "fedora/vfl.hpp"

namespace fedora {

enum class BaselineMethod { kRetrain, kGradientAscent };

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::kRetrain;
  std::size_t iterations = 50;  // retrain epochs / ascent steps
  double lr = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t ga_finetune_rounds = 0;  // post-ascent passes over D_r
  double noise_std = 0.0;

  void validate() const;
};

// Fresh seeded initialization, trained on the retained rows only. The
// unlearning rows never reach the training path: the trainer sees a dataset
// built from D_r alone.
SplitModel retrain(const VerticalDataset& data, const PartitionResult& partition,
                   const std::vector<PartySpec>& parties, const std::vector<std::size_t>& top_hidden,
                   const BaselineConfig& config);

// Gradient ascent on the cross-entropy over D_u, then optional fine-tuning
// passes over D_r.
SplitModel gradient_ascent_unlearn(const SplitModel& model, const VerticalDataset& data,
                                   const PartitionResult& partition, const BaselineConfig& config);

}  // namespace fedora
