#include "fedora/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fedora/errors.hpp"

namespace fedora {

void UnlearnConfig::validate() const {
  if (!(beta < alpha)) throw ConfigError("unlearn config: beta must be < alpha");
  if (!(kappa_d < 1.0)) throw ConfigError("unlearn config: kappa_d must be < 1");
  if (!(kappa_i > 1.0)) throw ConfigError("unlearn config: kappa_i must be > 1");
  if (tau0 <= 0.0 || sigma0 < 0.0) throw ConfigError("unlearn config: tau0 > 0, sigma0 >= 0 required");
  if (tau0 > tau_max) throw ConfigError("unlearn config: tau0 exceeds tau_max");
  if (sigma0 > sigma_max) throw ConfigError("unlearn config: sigma0 exceeds sigma_max");
  if (delta < 0.0 || delta > 1.0) throw ConfigError("unlearn config: delta must be in [0, 1]");
  if (batch_size == 0) throw ConfigError("unlearn config: batch_size must be >= 1");
  if (rho < 0.0) throw ConfigError("unlearn config: rho must be >= 0");
  if (noise_std < 0.0) throw ConfigError("unlearn config: noise_std must be >= 0");
}

UnlearningLossResult unlearning_loss(const DenseTensor& probs, double omega_weight) {
  if (probs.ndim() != 2) throw DimensionError("unlearning_loss: expected batch x classes");
  const std::size_t batch = probs.rows(), classes = probs.cols();
  if (classes < 2) throw DimensionError("unlearning_loss: need at least 2 classes");

  const double log_c = std::log(static_cast<double>(classes));
  UnlearningLossResult res;
  res.grad_probs = DenseTensor({batch, classes});
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = probs(i, j);
      if (p < 0.0) {
        throw ValidationError("unlearning_loss: negative probability at row " + std::to_string(i));
      }
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
      throw ValidationError("unlearning_loss: row " + std::to_string(i) +
                            " does not sum to 1 (sum = " + std::to_string(sum) + ")");
    }
    // H - KL(P||U) = -2 * sum p log p - log C, with p log p -> 0 at p = 0.
    double plogp = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = probs(i, j);
      if (p > 0.0) plogp += p * std::log(p);
      // Clamped log keeps the gradient finite at p = 0; the softmax chain
      // multiplies it by p and recovers the correct zero limit.
      const double logp = std::log(std::max(p, 1e-300));
      res.grad_probs(i, j) = -2.0 * omega_weight * (logp + 1.0);
    }
    total += omega_weight * (-2.0 * plogp - log_c);
  }
  res.loss = total;
  return res;
}

DenseTensor dual_update(const DenseTensor& omega, const DenseTensor& grad_u, double gamma,
                        double sigma) {
  if (!omega.same_shape(grad_u)) throw DimensionError("dual_update: shape mismatch");
  DenseTensor out = omega;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(0.0, omega[i] + sigma * (gamma - grad_u[i]));
  }
  return out;
}

DenseTensor primal_update(const DenseTensor& theta, const DenseTensor& grad_r,
                          const DenseTensor& grad_u, const DenseTensor& omega, double rho,
                          const DenseTensor& theta_init, double tau) {
  if (!theta.same_shape(grad_r) || !theta.same_shape(grad_u) || !theta.same_shape(omega) ||
      !theta.same_shape(theta_init)) {
    throw DimensionError("primal_update: shape mismatch");
  }
  if (tau <= 0.0) throw ValidationError("primal_update: tau must be > 0");
  DenseTensor out = theta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = theta[i] - tau * (grad_r[i] - grad_u[i] * omega[i] + rho * (theta[i] - theta_init[i]));
  }
  return out;
}

void adapt_steps(DualState& state, const UnlearnConfig& config) {
  if (state.delta_theta_prev <= 0.0) return;  // no usable history this round
  const double ratio = state.delta_theta_curr / state.delta_theta_prev;
  double factor = 1.0;
  if (ratio < config.beta) {
    factor = config.kappa_i;
  } else if (ratio > config.alpha) {
    factor = config.kappa_d;
  }
  state.tau = std::min(state.tau * factor, config.tau_max);
  state.sigma = std::min(state.sigma * factor, config.sigma_max);
}

std::vector<std::vector<std::size_t>> remaining_schedule(double delta, std::size_t remaining_count,
                                                         std::size_t batch_size,
                                                         std::mt19937_64& rng) {
  if (batch_size == 0) throw ValidationError("remaining_schedule: batch_size must be >= 1");
  if (delta < 0.0 || delta > 1.0) throw ValidationError("remaining_schedule: delta must be in [0, 1]");
  std::vector<std::vector<std::size_t>> schedule;
  if (delta == 0.0 || remaining_count == 0) return schedule;

  const double work = delta * static_cast<double>(remaining_count);
  const std::size_t n_batches =
      static_cast<std::size_t>(std::ceil(work / static_cast<double>(batch_size)));
  std::vector<std::size_t> order(remaining_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  schedule.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t start = b * batch_size;
    if (start >= remaining_count) break;
    const std::size_t end = std::min(remaining_count, start + batch_size);
    schedule.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                          order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return schedule;
}

namespace {

// Map an element-wise tensor update across a ParamSet.
template <typename Fn>
void for_each_pair(ParamSet& a, const ParamSet& b, Fn fn) {
  auto ta = tensor_list(a);
  auto tb = tensor_list(b);
  if (ta.size() != tb.size()) throw DimensionError("paramset: structure mismatch");
  for (std::size_t i = 0; i < ta.size(); ++i) fn(*ta[i], *tb[i]);
}

}  // namespace

UnlearnResult fedora_unlearn(const SplitModel& model, const VerticalDataset& data,
                             const PartitionResult& partition, const UnlearnConfig& config,
                             const RoundObserver& observer) {
  config.validate();
  if (partition.unlearn_rows.empty()) {
    throw ValidationError("fedora_unlearn: empty unlearning set");
  }
  partition.validate(data.num_rows());
  model.validate();

  UnlearnResult result;
  result.model = model;
  result.model.freeze_anchor();
  if (config.iterations == 0) return result;

  SplitModel& m = result.model;
  const ParamSet& anchor = *m.anchor;

  DualState state;
  state.omega = zeros_like(m.params);
  state.tau = config.tau0;
  state.sigma = config.sigma0;

  std::mt19937_64 rng(config.seed);
  const ParamSet zero_grads = zeros_like(m.params);
  ParamSet theta_prev = m.params;

  for (std::size_t k = 0; k < config.iterations; ++k) {
    // Unlearning phase: full batch over D_u, dual update per parameter group.
    RoundForward fwd_u = forward_round(m, data, partition.unlearn_rows, config.noise_std,
                                       config.noise_std > 0.0 ? &rng : nullptr);
    DenseTensor probs = softmax(fwd_u.logits);
    UnlearningLossResult ul = unlearning_loss(probs, config.omega_weight);
    if (!std::isfinite(ul.loss)) {
      throw DivergenceError("fedora_unlearn: non-finite unlearning loss at round " +
                            std::to_string(k));
    }
    DenseTensor grad_logits = softmax_vjp(probs, ul.grad_probs);
    ParamSet grads_u = backward_round(m, data, partition.unlearn_rows, fwd_u, grad_logits);

    for_each_pair(state.omega, grads_u, [&](DenseTensor& om, const DenseTensor& gu) {
      om = dual_update(om, gu, config.gamma, state.sigma);
    });

    // Remaining phase: R substeps with the frozen round-k unlearning gradient
    // and the round-(k+1) dual. delta = 0 still applies the dual and proximal
    // forces once, with a zero remaining-data gradient.
    const double tau_k = state.tau;
    const double sigma_k = state.sigma;
    auto apply_primal = [&](const ParamSet& grads_r) {
      auto theta = tensor_list(m.params);
      auto gr = tensor_list(grads_r);
      auto gu = tensor_list(grads_u);
      auto om = tensor_list(state.omega);
      auto th0 = tensor_list(anchor);
      for (std::size_t t = 0; t < theta.size(); ++t) {
        *theta[t] = primal_update(*theta[t], *gr[t], *gu[t], *om[t], config.rho, *th0[t], tau_k);
      }
    };

    double loss_r = std::numeric_limits<double>::quiet_NaN();
    const auto schedule =
        remaining_schedule(config.delta, partition.remain_rows.size(), config.batch_size, rng);
    if (schedule.empty()) {
      apply_primal(zero_grads);
    } else {
      double loss_sum = 0.0;
      for (const std::vector<std::size_t>& batch : schedule) {
        std::vector<std::size_t> rows(batch.size());
        std::vector<int> labels(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          rows[i] = partition.remain_rows[batch[i]];
          labels[i] = data.labels[rows[i]];
        }
        RoundForward fwd_r = forward_round(m, data, rows, config.noise_std,
                                           config.noise_std > 0.0 ? &rng : nullptr);
        SoftmaxXentResult xe = softmax_cross_entropy(fwd_r.logits, labels);
        if (!std::isfinite(xe.loss)) {
          throw DivergenceError("fedora_unlearn: non-finite remaining loss at round " +
                                std::to_string(k));
        }
        ParamSet grads_r = backward_round(m, data, rows, fwd_r, xe.grad_logits);
        apply_primal(grads_r);
        loss_sum += xe.loss;
      }
      loss_r = loss_sum / static_cast<double>(schedule.size());
    }

    // Step-size adaptation from successive iterate changes.
    state.delta_theta_curr = l2_distance(m.params, theta_prev);
    result.trace.push_back({k, ul.loss, loss_r, tau_k, sigma_k, state.delta_theta_curr});
    adapt_steps(state, config);
    state.delta_theta_prev = state.delta_theta_curr;
    theta_prev = m.params;

    if (observer) observer(k, state);
  }
  return result;
}

}  // namespace fedora
