#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fedora/vfl.hpp"

namespace fedora {

// Primal-dual unlearning configuration. Defaults follow the engine's
// reference operating point; everything is config-exposed.
struct UnlearnConfig {
  double gamma = 0.0;          // unlearning threshold, broadcast element-wise
  double omega_weight = 2.0;   // forgetting weight on the uncertainty loss
  double rho = 0.01;           // proximal coefficient toward the anchor
  double delta = 0.05;         // batch selection ratio over D_r
  std::size_t batch_size = 128;
  std::size_t iterations = 100;  // K
  double alpha = 1.5;          // step ratio upper threshold
  double beta = 0.5;           // step ratio lower threshold (beta < alpha)
  double kappa_i = 1.1;        // increase factor (> 1)
  double kappa_d = 0.7;        // decay factor (< 1)
  double tau0 = 0.01;
  double sigma0 = 0.01;
  double tau_max = 0.05;
  double sigma_max = 0.05;
  std::uint64_t seed = 0;
  double noise_std = 0.0;      // embedding channel noise during unlearning

  void validate() const;
};

// Dual tensors, current step sizes and the iterate-change history.
struct DualState {
  ParamSet omega;  // non-negative, Theta-shaped
  double tau = 0.0;
  double sigma = 0.0;
  double delta_theta_prev = 0.0;  // |Theta^k - Theta^{k-1}|
  double delta_theta_curr = 0.0;  // |Theta^{k+1} - Theta^k|
};

struct UnlearningLossResult {
  double loss;             // sum over rows of w * (H(P) - KL(P || U))
  DenseTensor grad_probs;  // d loss / d P; caller chains the softmax Jacobian
};

// Uncertainty loss: per row w * (H(P) - KL(P||U)) = w * (2 H(P) - ln C),
// maximized at the uniform distribution.
UnlearningLossResult unlearning_loss(const DenseTensor& probs, double omega_weight);

// Omega' = max(0, Omega + sigma * (gamma - grad_u)), element-wise.
DenseTensor dual_update(const DenseTensor& omega, const DenseTensor& grad_u, double gamma,
                        double sigma);

// theta' = theta - tau * (grad_r - grad_u .* omega + rho * (theta - theta_init)).
DenseTensor primal_update(const DenseTensor& theta, const DenseTensor& grad_r,
                          const DenseTensor& grad_u, const DenseTensor& omega, double rho,
                          const DenseTensor& theta_init, double tau);

// Multiply tau and sigma by kappa_i when the iterate-change ratio is below
// beta, by kappa_d when above alpha; clamp to the caps. Skipped when no
// previous change is recorded.
void adapt_steps(DualState& state, const UnlearnConfig& config);

// ceil(delta * remaining / batch) batches sampled without replacement within
// the round. Indices are positions into the remaining list.
std::vector<std::vector<std::size_t>> remaining_schedule(double delta, std::size_t remaining_count,
                                                         std::size_t batch_size,
                                                         std::mt19937_64& rng);

struct UnlearnTraceRow {
  std::size_t round = 0;
  double loss_u = 0.0;       // summed uncertainty loss on D_u
  double loss_r = 0.0;       // mean substep loss on D_r (NaN when delta = 0)
  double tau = 0.0;          // step sizes used this round
  double sigma = 0.0;
  double delta_theta = 0.0;  // parameter change produced by this round
};

struct UnlearnResult {
  SplitModel model;
  std::vector<UnlearnTraceRow> trace;
};

// Called after each round with the post-round dual state.
using RoundObserver = std::function<void(std::size_t round, const DualState& state)>;

// The full primal-dual loop: full-batch dual phase on D_u, mini-batch primal
// substeps over D_r with the frozen round-k unlearning gradient, then
// adaptive step sizes.
UnlearnResult fedora_unlearn(const SplitModel& model, const VerticalDataset& data,
                             const PartitionResult& partition, const UnlearnConfig& config,
                             const RoundObserver& observer = {});

}  // namespace fedora
