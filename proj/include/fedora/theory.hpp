#pragma once

#include <cstdint>
#include <vector>

#include "fedora/dataset.hpp"
#include "fedora/tensor.hpp"

namespace fedora {

// Ridge-regularized logistic regression instance: mu-strongly convex and
// L-smooth with mu = lambda and L = lambda + lambda_max(X^T X) / (4n).
// grad_bound (G) and omega_max start unset and are fixed by the first probe
// run; sigma_r is the per-sample gradient deviation at theta0.
struct ConvexInstance {
  DenseTensor features;    // n x d
  std::vector<int> labels; // 0/1
  double lambda = 0.0;
  double mu = 0.0;
  double lipschitz = 0.0;
  double sigma_r = 0.0;
  double grad_bound = 0.0;  // G, 0 = unset
  double omega_max = 0.0;   // 0 = unset
  DenseTensor theta0;       // trained on the full instance

  std::size_t num_rows() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
};

// Largest eigenvalue of X^T X via power iteration on the explicit Gram
// matrix.
double largest_gram_eigenvalue(const DenseTensor& features, std::size_t iterations = 500);

ConvexInstance build_convex_instance(std::size_t n, std::size_t d, double lambda,
                                     std::uint64_t seed);

// Right-hand side of the model-difference bound:
// (sqrt(1 - tau mu))^k e0 + sqrt(tau) / (1 - sqrt(1 - tau mu))
//   * (sigma_r / sqrt(batch) + G * omega_max).
double bound_value(std::size_t k, double tau, double mu, double e0, double sigma_r,
                   std::size_t batch, double grad_bound, double omega_max);

double asymptotic_bias(double tau, double mu, double sigma_r, std::size_t batch,
                       double grad_bound, double omega_max);

struct TheoryConfig {
  std::size_t batch_size = 128;
  double tau = 0.0;     // 0 = auto: 0.9 * min(1/(2L), mu/(4L^2))
  double sigma0 = 1e-3;
  double gamma = 0.0;
  double omega_weight = 2.0;
  std::uint64_t seed = 0;
  bool force_zero_dual = false;   // keep Omega at 0
  bool full_batch = false;        // use all of D_r each primal step
  bool retrain_same_init = false; // start the retrained model at theta0
  double probe_margin = 1.5;
};

struct BoundTrace {
  std::vector<double> model_difference;  // e_k, k = 0..K
  std::vector<double> bound;
  std::vector<double> tau_values;
  std::vector<double> sigma_values;
  bool violation = false;
  std::size_t violation_count = 0;
  double e0 = 0.0;
  double bias = 0.0;
  double tau = 0.0;
};

// Runs the primal-dual unlearner and full-gradient retraining in lockstep on
// the convex instance; fixes G and omega_max from the probe maxima when
// unset, then checks e_k <= bound_value(k) at every iteration.
BoundTrace run_bound_trace(ConvexInstance& instance, const PartitionResult& partition,
                           const TheoryConfig& config, std::size_t iterations);

// Seeded D_u/D_r split of the instance rows: a fraction of one class.
PartitionResult convex_partition(const ConvexInstance& instance, double unlearn_fraction,
                                 int target_class, std::uint64_t seed);

}  // namespace fedora
