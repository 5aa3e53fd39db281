#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedora/vfl.hpp"

namespace fedora {

// Argmax-prediction accuracy against the dataset's stored labels.
double accuracy(const SplitModel& model, const VerticalDataset& data,
                std::span<const std::size_t> rows);

// Logistic membership classifier over attack features derived from a model's
// predicted probabilities: sorted probability vector, max probability,
// entropy. Outputs are membership probabilities in [0, 1].
struct ShadowAttackModel {
  DenseTensor weights;  // C + 2 features
  double bias = 0.0;
  int num_classes = 0;

  double member_probability(std::span<const double> probs_row) const;
};

struct MiaFitOptions {
  std::size_t iterations = 600;
  double lr = 0.5;
  std::uint64_t seed = 0;
  // Cap on the member:non-member ratio used for fitting. 1 balances the two
  // sides by subsampling; larger values keep the experiment's natural
  // imbalance (training sets are usually larger than test sets), which acts
  // as the attacker's prior.
  double member_ratio = 1.0;
};

// Fit the shadow attack on the original model's outputs: member rows against
// non-member rows, balanced by seeded subsampling of the larger side.
ShadowAttackModel mia_fit(const SplitModel& model, const VerticalDataset& member_data,
                          std::span<const std::size_t> member_rows,
                          const VerticalDataset& nonmember_data,
                          std::span<const std::size_t> nonmember_rows,
                          const MiaFitOptions& options);

// Fraction of the given rows the attack classifies as members (p > 0.5)
// using the supplied model's outputs.
double mia_asr(const ShadowAttackModel& attack, const SplitModel& model,
               const VerticalDataset& data, std::span<const std::size_t> rows);

// Rank AUC of attack scores, tie-aware (0.5 for indistinguishable inputs).
double attack_auc(const ShadowAttackModel& attack, const SplitModel& model,
                  const VerticalDataset& member_data, std::span<const std::size_t> member_rows,
                  const VerticalDataset& nonmember_data,
                  std::span<const std::size_t> nonmember_rows);

// Backdoor trigger: k x k patch of maximum intensity at the bottom-right
// corner, labels overwritten to the target class.
struct TriggerSpec {
  std::size_t patch = 2;
  int target_label = 0;
  double pixel_value = 1.0;
};

struct BackdoorBatch {
  DenseTensor images;       // batch x H x W
  std::vector<int> labels;  // all = target
};

BackdoorBatch inject_backdoor(const DenseTensor& images, const TriggerSpec& trigger);

// Fraction of the given rows predicted as the target label.
double bd_asr(const SplitModel& model, const VerticalDataset& data,
              std::span<const std::size_t> rows, int target_label);

}  // namespace fedora
