#include <doctest.h>

#include <cmath>
#include <random>

#include "fedora/errors.hpp"
#include "fedora/mlp.hpp"

using namespace fedora;

namespace {

// Independent forward oracle: plain per-element loops, no shared code with
// mlp_forward's matmul path.
DenseTensor naive_forward(const MlpParams& p, const DenseTensor& x) {
  DenseTensor a = x;
  for (const MlpLayer& l : p.layers) {
    DenseTensor z({a.rows(), l.weight.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < l.weight.cols(); ++j) {
        double acc = l.bias[j];
        for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * l.weight(k, j);
        z(i, j) = l.act == Activation::kRelu ? std::max(0.0, acc) : acc;
      }
    }
    a = std::move(z);
  }
  return a;
}

MlpParams random_net(std::size_t in, const std::vector<std::size_t>& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return make_mlp(in, dims, rng);
}

DenseTensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  DenseTensor m({r, c});
  for (double& v : m.values()) v = dist(rng);
  return m;
}

}  // namespace

TEST_CASE("identity single layer passes input through") {
  MlpParams p;
  MlpLayer l;
  l.weight = DenseTensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  l.bias = DenseTensor({3});
  l.act = Activation::kIdentity;
  p.layers.push_back(l);

  DenseTensor x = random_matrix(4, 3, 11);
  DenseTensor y = mlp_forward(p, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("zero weights with bias give constant rows") {
  MlpParams p;
  MlpLayer l;
  l.weight = DenseTensor({4, 2});
  l.bias = DenseTensor({2}, {0.5, -1.5});
  p.layers.push_back(l);

  DenseTensor x = random_matrix(5, 4, 12);
  DenseTensor y = mlp_forward(p, x);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    CHECK(y(i, 0) == 0.5);
    CHECK(y(i, 1) == -1.5);
  }
}

TEST_CASE("forward matches independent naive re-evaluation to 1e-12") {
  MlpParams p = random_net(5, {7, 4}, 21);
  DenseTensor x = random_matrix(6, 5, 22);
  DenseTensor fast = mlp_forward(p, x);
  DenseTensor slow = naive_forward(p, x);
  REQUIRE(fast.same_shape(slow));
  for (std::size_t i = 0; i < fast.size(); ++i) {
    CHECK(std::fabs(fast[i] - slow[i]) < 1e-12);
  }
}

TEST_CASE("forward is deterministic") {
  MlpParams p = random_net(4, {6, 3}, 31);
  DenseTensor x = random_matrix(3, 4, 32);
  DenseTensor a = mlp_forward(p, x);
  DenseTensor b = mlp_forward(p, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("forward rejects width mismatch with the offending layer") {
  MlpParams p = random_net(4, {6, 3}, 41);
  DenseTensor x = random_matrix(3, 5, 42);
  CHECK_THROWS_AS(mlp_forward(p, x), DimensionError);
}

TEST_CASE("linear layer backward has the closed form") {
  // y = x W, upstream g: dW = x^T g, dx = g W^T
  MlpParams p;
  MlpLayer l;
  l.weight = random_matrix(3, 2, 51);
  l.bias = DenseTensor({2});
  p.layers.push_back(l);

  DenseTensor x = random_matrix(4, 3, 52);
  DenseTensor g = random_matrix(4, 2, 53);
  MlpBackwardResult back = mlp_backward(p, x, g);

  DenseTensor dw = matmul_ta(x, g);
  DenseTensor dx = matmul_tb(g, l.weight);
  for (std::size_t i = 0; i < dw.size(); ++i) {
    CHECK(back.param_grads.layers[0].weight[i] == doctest::Approx(dw[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < dx.size(); ++i) {
    CHECK(back.input_grads[i] == doctest::Approx(dx[i]).epsilon(1e-12));
  }
  // bias grad = column sums of g
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 4; ++r) s += g(r, c);
    CHECK(back.param_grads.layers[0].bias[c] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("relu blocks gradient at strictly negative pre-activations") {
  MlpParams p;
  MlpLayer l;
  l.weight = DenseTensor({1, 1}, {1.0});
  l.bias = DenseTensor({1}, {-5.0});  // pre-activation negative for small inputs
  l.act = Activation::kRelu;
  p.layers.push_back(l);

  DenseTensor x({1, 1}, {1.0});
  DenseTensor g({1, 1}, {1.0});
  MlpBackwardResult back = mlp_backward(p, x, g);
  CHECK(back.param_grads.layers[0].weight[0] == 0.0);
  CHECK(back.param_grads.layers[0].bias[0] == 0.0);
  CHECK(back.input_grads[0] == 0.0);
}

TEST_CASE("backward matches central finite differences on a small net") {
  MlpParams p = random_net(4, {5, 3}, 61);
  DenseTensor x = random_matrix(6, 4, 62);
  std::vector<int> labels = {0, 2, 1, 1, 0, 2};

  MlpLossFn fn = [&](const MlpParams& q) {
    DenseTensor logits = mlp_forward(q, x);
    SoftmaxXentResult xe = softmax_cross_entropy(logits, labels);
    MlpBackwardResult back = mlp_backward(q, x, xe.grad_logits);
    return std::make_pair(xe.loss, back.param_grads);
  };
  CHECK(finite_diff_check(fn, p, 1e-5) < 1e-4);
}

TEST_CASE("softmax cross entropy basics") {
  // uniform logits, C = 4 -> loss = ln 4
  DenseTensor logits({2, 4}, {1, 1, 1, 1, -3, -3, -3, -3});
  SoftmaxXentResult xe = softmax_cross_entropy(logits, {0, 3});
  CHECK(xe.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // dominating logit -> loss -> 0
  DenseTensor big({1, 3}, {500.0, 0.0, 0.0});
  SoftmaxXentResult xe2 = softmax_cross_entropy(big, {0});
  CHECK(xe2.loss == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(softmax_cross_entropy(big, {3}), ValidationError);
  CHECK_THROWS_AS(softmax_cross_entropy(big, {-1}), ValidationError);
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
  DenseTensor logits = random_matrix(5, 4, 71);
  std::vector<int> labels = {1, 3, 0, 2, 2};
  SoftmaxXentResult xe = softmax_cross_entropy(logits, labels);

  const double eps = 1e-6;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    DenseTensor up = logits, down = logits;
    up[i] += eps;
    down[i] -= eps;
    const double fd = (softmax_cross_entropy(up, labels).loss -
                       softmax_cross_entropy(down, labels).loss) /
                      (2 * eps);
    CHECK(std::fabs(fd - xe.grad_logits[i]) < 1e-6);
  }
}

TEST_CASE("softmax gradient rows sum to zero") {
  DenseTensor logits = random_matrix(8, 5, 81);
  std::vector<int> labels = {0, 1, 2, 3, 4, 0, 1, 2};
  SoftmaxXentResult xe = softmax_cross_entropy(logits, labels);
  for (std::size_t i = 0; i < 8; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += xe.grad_logits(i, j);
    CHECK(std::fabs(s) < 1e-12);
  }
}

TEST_CASE("finite_diff_check edge cases") {
  MlpParams p = random_net(3, {2}, 91);

  // quadratic loss 0.5 ||theta||^2 -> exact gradient
  MlpLossFn quad = [](const MlpParams& q) {
    double loss = 0.5 * squared_l2(q);
    MlpParams grad = q;
    return std::make_pair(loss, grad);
  };
  CHECK(finite_diff_check(quad, p, 1e-5) < 1e-9);

  // constant loss -> zero gradient both ways
  MlpLossFn constant = [](const MlpParams& q) {
    return std::make_pair(1.0, zeros_like(q));
  };
  CHECK(finite_diff_check(constant, p, 1e-5) == 0.0);

  CHECK_THROWS_AS(finite_diff_check(quad, p, 0.0), ValidationError);
}
