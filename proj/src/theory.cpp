#include "fedora/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedora/errors.hpp"
#include "fedora/optimizer.hpp"

namespace fedora {

namespace {

// z = X[rows] * theta, one logit per selected row.
double row_logit(const DenseTensor& x, std::size_t row, const DenseTensor& theta) {
  double z = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) z += x(row, j) * theta[j];
  return z;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Mean cross-entropy gradient over rows plus the ridge term.
DenseTensor grad_remaining(const ConvexInstance& inst, const DenseTensor& theta,
                           std::span<const std::size_t> rows) {
  DenseTensor g({inst.dim()});
  for (std::size_t r : rows) {
    const double err = sigmoid(row_logit(inst.features, r, theta)) -
                       static_cast<double>(inst.labels[r]);
    for (std::size_t j = 0; j < inst.dim(); ++j) g[j] += err * inst.features(r, j);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t j = 0; j < inst.dim(); ++j) g[j] = g[j] * inv + inst.lambda * theta[j];
  return g;
}

// Summed uncertainty-loss gradient over D_u. For binary sigmoid outputs the
// per-sample gradient is -2 w z p (1-p) x.
DenseTensor grad_unlearning(const ConvexInstance& inst, const DenseTensor& theta,
                            std::span<const std::size_t> rows, double omega_weight) {
  DenseTensor g({inst.dim()});
  for (std::size_t r : rows) {
    const double z = row_logit(inst.features, r, theta);
    const double p = sigmoid(z);
    const double coeff = -2.0 * omega_weight * z * p * (1.0 - p);
    for (std::size_t j = 0; j < inst.dim(); ++j) g[j] += coeff * inst.features(r, j);
  }
  return g;
}

double l2(const DenseTensor& v) { return std::sqrt(squared_l2(v)); }

}  // namespace

double largest_gram_eigenvalue(const DenseTensor& features, std::size_t iterations) {
  const std::size_t d = features.cols();
  DenseTensor gram = matmul_ta(features, features);
  DenseTensor v({d});
  for (std::size_t j = 0; j < d; ++j) v[j] = 1.0 / std::sqrt(static_cast<double>(d));
  double eig = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    DenseTensor next({d});
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += gram(i, j) * v[j];
      next[i] = acc;
    }
    const double norm = l2(next);
    if (norm == 0.0) return 0.0;
    for (std::size_t j = 0; j < d; ++j) next[j] /= norm;
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += gram(i, j) * next[j];
      quad += next[i] * acc;
    }
    if (std::fabs(quad - eig) <= 1e-12 * std::max(1.0, std::fabs(quad))) {
      return quad;
    }
    eig = quad;
    v = std::move(next);
  }
  return eig;
}

ConvexInstance build_convex_instance(std::size_t n, std::size_t d, double lambda,
                                     std::uint64_t seed) {
  if (lambda <= 0.0) throw ValidationError("build_convex_instance: lambda must be > 0");
  if (n == 0 || d == 0) throw ValidationError("build_convex_instance: empty design");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  ConvexInstance inst;
  inst.features = DenseTensor({n, d});
  for (double& v : inst.features.values()) v = unit(rng);

  DenseTensor w_true({d});
  for (double& v : w_true.values()) v = unit(rng);
  inst.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double score = row_logit(inst.features, r, w_true) + 0.5 * unit(rng);
    inst.labels[r] = score > 0.0 ? 1 : 0;
  }

  inst.lambda = lambda;
  inst.mu = lambda;
  const double gram_eig = largest_gram_eigenvalue(inst.features);
  if (!std::isfinite(gram_eig) || gram_eig <= 0.0) {
    throw DivergenceError("build_convex_instance: degenerate design matrix");
  }
  inst.lipschitz = lambda + 0.25 * gram_eig / static_cast<double>(n);

  // Pretrain on the full instance to get the unlearner's starting point.
  inst.theta0 = DenseTensor({d});
  const std::vector<std::size_t> everything = [&] {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
  }();
  const double tau_pre = 1.0 / inst.lipschitz;
  for (std::size_t it = 0; it < 300; ++it) {
    DenseTensor g = grad_remaining(inst, inst.theta0, everything);
    for (std::size_t j = 0; j < d; ++j) inst.theta0[j] -= tau_pre * g[j];
  }

  // Per-sample gradient deviation at theta0 (the ridge term cancels).
  DenseTensor mean_g = grad_remaining(inst, inst.theta0, everything);
  double var = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double err = sigmoid(row_logit(inst.features, r, inst.theta0)) -
                       static_cast<double>(inst.labels[r]);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double gj = err * inst.features(r, j) + inst.lambda * inst.theta0[j];
      const double dev = gj - mean_g[j];
      acc += dev * dev;
    }
    var += acc;
  }
  inst.sigma_r = std::sqrt(var / static_cast<double>(n));
  return inst;
}

double bound_value(std::size_t k, double tau, double mu, double e0, double sigma_r,
                   std::size_t batch, double grad_bound, double omega_max) {
  const double tm = tau * mu;
  if (tm <= 0.0 || tm >= 1.0) {
    throw ValidationError("bound_value: tau * mu must be in (0, 1)");
  }
  if (batch == 0) throw ValidationError("bound_value: batch must be >= 1");
  const double contraction = std::sqrt(1.0 - tm);
  return std::pow(contraction, static_cast<double>(k)) * e0 +
         asymptotic_bias(tau, mu, sigma_r, batch, grad_bound, omega_max);
}

double asymptotic_bias(double tau, double mu, double sigma_r, std::size_t batch,
                       double grad_bound, double omega_max) {
  const double tm = tau * mu;
  if (tm <= 0.0 || tm >= 1.0) {
    throw ValidationError("asymptotic_bias: tau * mu must be in (0, 1)");
  }
  const double contraction = std::sqrt(1.0 - tm);
  return std::sqrt(tau) / (1.0 - contraction) *
         (sigma_r / std::sqrt(static_cast<double>(batch)) + grad_bound * omega_max);
}

PartitionResult convex_partition(const ConvexInstance& instance, double unlearn_fraction,
                                 int target_class, std::uint64_t seed) {
  if (unlearn_fraction <= 0.0 || unlearn_fraction > 1.0) {
    throw ValidationError("convex_partition: fraction must be in (0, 1]");
  }
  std::vector<std::size_t> target_rows;
  for (std::size_t r = 0; r < instance.num_rows(); ++r) {
    if (instance.labels[r] == target_class) target_rows.push_back(r);
  }
  if (target_rows.empty()) {
    throw ValidationError("convex_partition: class " + std::to_string(target_class) + " absent");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(target_rows.begin(), target_rows.end(), rng);
  const std::size_t take = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(unlearn_fraction *
                                             static_cast<double>(target_rows.size()))));
  std::vector<char> is_unlearn(instance.num_rows(), 0);
  for (std::size_t i = 0; i < take; ++i) is_unlearn[target_rows[i]] = 1;

  PartitionResult res;
  for (std::size_t r = 0; r < instance.num_rows(); ++r) {
    (is_unlearn[r] ? res.unlearn_rows : res.remain_rows).push_back(r);
  }
  return res;
}

BoundTrace run_bound_trace(ConvexInstance& instance, const PartitionResult& partition,
                           const TheoryConfig& config, std::size_t iterations) {
  partition.validate(instance.num_rows());
  if (partition.unlearn_rows.empty() || partition.remain_rows.empty()) {
    throw ValidationError("run_bound_trace: both D_u and D_r must be non-empty");
  }

  const double L = instance.lipschitz;
  const double mu = instance.mu;
  const double tau_cap = std::min(1.0 / (2.0 * L), mu / (4.0 * L * L));
  const double tau = config.tau > 0.0 ? config.tau : 0.9 * tau_cap;
  if (tau > tau_cap) {
    throw ConfigError("run_bound_trace: tau violates the small-step condition (cap " +
                      std::to_string(tau_cap) + ")");
  }
  const double sigma = config.force_zero_dual ? 0.0 : config.sigma0;
  if (sigma * tau * L * L >= 1.0) {
    throw ConfigError("run_bound_trace: sigma * tau * L^2 must be < 1");
  }
  if (tau * mu >= 1.0) throw ConfigError("run_bound_trace: tau * mu must be < 1");

  const std::size_t d = instance.dim();
  const std::size_t batch =
      config.full_batch ? partition.remain_rows.size()
                        : std::min(config.batch_size, partition.remain_rows.size());
  if (batch == 0) throw ConfigError("run_bound_trace: empty batch");

  DenseTensor theta = instance.theta0;
  DenseTensor theta_bar({d});
  if (config.retrain_same_init) {
    theta_bar = instance.theta0;
  } else {
    std::mt19937_64 init_rng(config.seed + 1);
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    for (double& v : theta_bar.values()) v = init(init_rng);
  }
  DenseTensor omega({d});

  std::mt19937_64 batch_rng(config.seed);
  std::vector<std::size_t> pool = partition.remain_rows;

  BoundTrace trace;
  trace.tau = tau;
  double max_grad_u = 0.0, max_omega = 0.0;

  auto diff_norm = [&] {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dlt = theta[j] - theta_bar[j];
      acc += dlt * dlt;
    }
    return std::sqrt(acc);
  };

  for (std::size_t k = 0; k <= iterations; ++k) {
    trace.model_difference.push_back(diff_norm());
    trace.tau_values.push_back(tau);
    trace.sigma_values.push_back(sigma);
    if (k == iterations) break;

    // Dual phase on D_u.
    DenseTensor gu = grad_unlearning(instance, theta, partition.unlearn_rows,
                                     config.omega_weight);
    max_grad_u = std::max(max_grad_u, l2(gu));
    if (!config.force_zero_dual) {
      omega = dual_update(omega, gu, config.gamma, sigma);
    }
    max_omega = std::max(max_omega, l2(omega));

    // Primal phase: one mini-batch step, regularization-free coupling.
    std::span<const std::size_t> rows;
    if (config.full_batch) {
      rows = partition.remain_rows;
    } else {
      std::shuffle(pool.begin(), pool.end(), batch_rng);
      rows = std::span<const std::size_t>(pool.data(), batch);
    }
    DenseTensor g = grad_remaining(instance, theta, rows);
    for (std::size_t j = 0; j < d; ++j) {
      theta[j] -= tau * (g[j] - gu[j] * omega[j]);
    }
    if (!theta.all_finite()) {
      throw DivergenceError("run_bound_trace: unlearner diverged at iteration " +
                            std::to_string(k));
    }

    // Retraining side: full gradient over D_r.
    DenseTensor gbar = grad_remaining(instance, theta_bar, partition.remain_rows);
    for (std::size_t j = 0; j < d; ++j) theta_bar[j] -= tau * gbar[j];
  }

  // Fix the probe constants on first use.
  if (instance.grad_bound <= 0.0) instance.grad_bound = config.probe_margin * max_grad_u;
  if (instance.omega_max <= 0.0 && max_omega > 0.0) {
    instance.omega_max = config.probe_margin * max_omega;
  }

  trace.e0 = trace.model_difference.front();
  const double sigma_r_eff = config.full_batch ? 0.0 : instance.sigma_r;
  trace.bias = asymptotic_bias(tau, mu, sigma_r_eff, batch, instance.grad_bound,
                               instance.omega_max);
  trace.bound.reserve(trace.model_difference.size());
  for (std::size_t k = 0; k < trace.model_difference.size(); ++k) {
    const double b = bound_value(k, tau, mu, trace.e0, sigma_r_eff, batch,
                                 instance.grad_bound, instance.omega_max);
    trace.bound.push_back(b);
    if (trace.model_difference[k] > b) {
      trace.violation = true;
      ++trace.violation_count;
    }
  }
  return trace;
}

}  // namespace fedora
