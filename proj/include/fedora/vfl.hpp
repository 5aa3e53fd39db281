#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "fedora/dataset.hpp"
#include "fedora/mlp.hpp"

namespace fedora {

// Theta-shaped bundle: one parameter set per bottom model plus the top model.
// Also used for gradients and dual tensors.
struct ParamSet {
  std::vector<MlpParams> bottoms;
  MlpParams top;
};

std::vector<const DenseTensor*> tensor_list(const ParamSet& p);
std::vector<DenseTensor*> tensor_list(ParamSet& p);
ParamSet zeros_like(const ParamSet& p);
void axpy(ParamSet& dst, double a, const ParamSet& x);
double squared_l2(const ParamSet& p);
double l2_distance(const ParamSet& a, const ParamSet& b);

// Split model: per-party bottoms under one top model at the active party.
// The anchor is the deep copy of all parameters frozen at unlearning start.
struct SplitModel {
  ParamSet params;
  std::shared_ptr<const ParamSet> anchor;

  void freeze_anchor() { anchor = std::make_shared<const ParamSet>(params); }
  std::size_t embedding_width() const;
  void validate() const;
};

// PSI-lite: plaintext intersection of per-party id lists, canonical ascending
// order. Lists must be duplicate-free; an empty intersection is an error.
std::vector<long long> psi_align(const std::vector<std::vector<long long>>& party_ids);

struct RoundForward {
  DenseTensor global_embedding;  // rows x sum(embedding dims), party-id order
  DenseTensor logits;
};

// Party-local embeddings, optional Gaussian channel noise, concat at the
// active party, logits from the top model.
RoundForward forward_round(const SplitModel& model, const VerticalDataset& data,
                           std::span<const std::size_t> rows, double noise_std = 0.0,
                           std::mt19937_64* rng = nullptr);

// Top backward, slice the embedding gradient by party widths, backprop into
// each bottom. Returns the full Theta-shaped gradient.
ParamSet backward_round(const SplitModel& model, const VerticalDataset& data,
                        std::span<const std::size_t> rows, const RoundForward& forward,
                        const DenseTensor& loss_grad_logits);

struct TrainOptions {
  std::size_t epochs = 10;
  double lr = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double noise_std = 0.0;  // embedding channel noise during training
};

// Plain mini-batch gradient descent on softmax cross-entropy.
// Returns per-epoch mean batch loss.
std::vector<double> vfl_train(SplitModel& model, const VerticalDataset& data,
                              const TrainOptions& options);

SplitModel build_split_model(const std::vector<PartySpec>& parties, std::size_t num_classes,
                             const std::vector<std::size_t>& top_hidden, std::uint64_t seed);

DenseTensor predict_logits(const SplitModel& model, const VerticalDataset& data,
                           std::span<const std::size_t> rows);
DenseTensor predict_probs(const SplitModel& model, const VerticalDataset& data,
                          std::span<const std::size_t> rows);

using ParamSetLossFn = std::function<std::pair<double, ParamSet>(const ParamSet&)>;
double finite_diff_check(const ParamSetLossFn& loss_and_grad, const ParamSet& params,
                         double epsilon);

}  // namespace fedora
