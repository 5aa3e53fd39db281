#include <doctest.h>

#include <cmath>
#include <random>

#include "fedora/errors.hpp"
#include "fedora/theory.hpp"

using namespace fedora;

namespace {

// Matrix-free power iteration oracle: v <- X^T (X v), never forming the Gram.
double matrix_free_eigenvalue(const DenseTensor& x, std::size_t iterations) {
  const std::size_t n = x.rows(), d = x.cols();
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(d);
  for (double& e : v) e = dist(rng);

  double eig = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> xv(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) xv[r] += x(r, c) * v[c];
    }
    std::vector<double> next(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) next[c] += x(r, c) * xv[r];
    }
    double norm = 0.0;
    for (double e : next) norm += e * e;
    norm = std::sqrt(norm);
    for (double& e : next) e /= norm;

    // Rayleigh quotient of the normalized vector.
    std::vector<double> xn(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) xn[r] += x(r, c) * next[c];
    }
    double quad = 0.0;
    for (double e : xn) quad += e * e;
    eig = quad;
    v = std::move(next);
  }
  return eig;
}

}  // namespace

TEST_CASE("convex instance constants: mu exact, L dominates, spectrum checked") {
  ConvexInstance inst = build_convex_instance(300, 12, 1.0, 31);
  CHECK(inst.mu == 1.0);
  CHECK(inst.lipschitz >= inst.mu);
  CHECK(inst.sigma_r > 0.0);
  CHECK(std::isfinite(inst.lipschitz));

  const double gram = largest_gram_eigenvalue(inst.features);
  const double oracle = matrix_free_eigenvalue(inst.features, 600);
  CHECK(std::fabs(gram - oracle) / oracle < 1e-6);
}

TEST_CASE("bound_value reproduces the closed-form bias") {
  // tau = 0.01, mu = 1, sigma_r/sqrt(B) = 0.1, G * omega_max = 0.5
  const double bias = asymptotic_bias(0.01, 1.0, 0.1, 1, 0.5, 1.0);
  CHECK(bias == doctest::Approx(11.96992462).epsilon(1e-8));

  const double at0 = bound_value(0, 0.01, 1.0, 2.5, 0.1, 1, 0.5, 1.0);
  CHECK(at0 == doctest::Approx(2.5 + bias).epsilon(1e-12));
  CHECK(at0 >= 2.5);

  // Noiseless identical start vanishes entirely.
  for (std::size_t k : {0u, 3u, 50u}) {
    CHECK(bound_value(k, 0.01, 1.0, 0.0, 0.0, 128, 0.0, 0.0) == 0.0);
  }

  CHECK_THROWS_AS(bound_value(1, 2.0, 1.0, 1.0, 0.1, 8, 0.5, 1.0), ValidationError);
  CHECK_THROWS_AS(bound_value(1, 0.01, 1.0, 1.0, 0.1, 0, 0.5, 1.0), ValidationError);
}

TEST_CASE("bound trace has no violations on a small instance") {
  ConvexInstance inst = build_convex_instance(400, 10, 1.0, 37);
  PartitionResult part = convex_partition(inst, 0.2, 1, 41);

  TheoryConfig cfg;
  cfg.batch_size = 64;
  cfg.sigma0 = 1e-3;
  cfg.seed = 43;
  BoundTrace trace = run_bound_trace(inst, part, cfg, 150);
  CHECK(trace.violation_count == 0);
  CHECK_FALSE(trace.violation);
  CHECK(inst.grad_bound > 0.0);

  // The bound is monotone non-increasing toward the bias.
  for (std::size_t k = 1; k < trace.bound.size(); ++k) {
    CHECK(trace.bound[k] <= trace.bound[k - 1] + 1e-12);
  }
  CHECK(trace.bound.back() >= trace.bias);
}

TEST_CASE("identical start with full batches and zero dual stays identical") {
  ConvexInstance inst = build_convex_instance(200, 8, 1.0, 47);
  PartitionResult part = convex_partition(inst, 0.25, 1, 53);

  TheoryConfig cfg;
  cfg.force_zero_dual = true;
  cfg.full_batch = true;
  cfg.retrain_same_init = true;
  cfg.seed = 59;
  BoundTrace trace = run_bound_trace(inst, part, cfg, 60);
  for (double e : trace.model_difference) CHECK(e == 0.0);
  CHECK_FALSE(trace.violation);
}

TEST_CASE("contraction-only regime decays at least as fast as sqrt(1 - tau mu)^k") {
  ConvexInstance inst = build_convex_instance(300, 10, 1.0, 61);
  PartitionResult part = convex_partition(inst, 0.2, 1, 67);

  TheoryConfig cfg;
  cfg.force_zero_dual = true;
  cfg.full_batch = true;
  cfg.seed = 71;
  BoundTrace trace = run_bound_trace(inst, part, cfg, 80);
  REQUIRE(trace.e0 > 0.0);
  const double contraction = std::sqrt(1.0 - trace.tau * inst.mu);
  double factor = 1.0;
  for (std::size_t k = 0; k < trace.model_difference.size(); ++k) {
    CHECK(trace.model_difference[k] / trace.e0 <= factor + 1e-12);
    factor *= contraction;
  }
}

TEST_CASE("larger remaining batches strictly shrink the asymptotic bias") {
  ConvexInstance inst = build_convex_instance(400, 10, 1.0, 73);
  PartitionResult part = convex_partition(inst, 0.2, 1, 79);
  TheoryConfig cfg;
  cfg.seed = 83;
  run_bound_trace(inst, part, cfg, 50);  // fixes G and omega_max

  const double tau = 0.9 * std::min(1.0 / (2.0 * inst.lipschitz),
                                    inst.mu / (4.0 * inst.lipschitz * inst.lipschitz));
  const double bias_small = asymptotic_bias(tau, inst.mu, inst.sigma_r, 128, inst.grad_bound,
                                            inst.omega_max);
  const double bias_large = asymptotic_bias(tau, inst.mu, inst.sigma_r, 512, inst.grad_bound,
                                            inst.omega_max);
  CHECK(bias_large < bias_small);
}

TEST_CASE("step-condition violations are rejected up front") {
  ConvexInstance inst = build_convex_instance(200, 8, 1.0, 89);
  PartitionResult part = convex_partition(inst, 0.2, 1, 97);

  TheoryConfig too_big;
  too_big.tau = 10.0;  // beyond min(1/2L, mu/4L^2)
  CHECK_THROWS_AS(run_bound_trace(inst, part, too_big, 10), ConfigError);

  TheoryConfig sigma_huge;
  sigma_huge.sigma0 = 1e9;  // violates sigma tau L^2 < 1
  CHECK_THROWS_AS(run_bound_trace(inst, part, sigma_huge, 10), ConfigError);
}
