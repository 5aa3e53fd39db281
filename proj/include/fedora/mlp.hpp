#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "fedora/tensor.hpp"

namespace fedora {

enum class Activation { kRelu, kIdentity };

struct MlpLayer {
  DenseTensor weight;  // in x out
  DenseTensor bias;    // out
  Activation act = Activation::kIdentity;
};

// Parameters of one dense multilayer perceptron; adjacent layers compose.
struct MlpParams {
  std::vector<MlpLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  void validate() const;
};

// He-style init: relu on hidden layers, identity on the final layer.
MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& layer_dims,
                   std::mt19937_64& rng);

// Forward pass; pure function of (params, inputs).
DenseTensor mlp_forward(const MlpParams& params, const DenseTensor& inputs);

struct MlpBackwardResult {
  MlpParams param_grads;
  DenseTensor input_grads;  // gradient routed back through the inputs
};

MlpBackwardResult mlp_backward(const MlpParams& params, const DenseTensor& inputs,
                               const DenseTensor& upstream_grad);

struct SoftmaxXentResult {
  double loss;
  DenseTensor grad_logits;  // (softmax - onehot) / batch
  DenseTensor probs;
};

SoftmaxXentResult softmax_cross_entropy(const DenseTensor& logits,
                                        const std::vector<int>& labels);

// Row-wise stabilized softmax.
DenseTensor softmax(const DenseTensor& logits);

// Chain a gradient w.r.t. softmax outputs back to the logits:
// g_z = p .* (g_p - <g_p, p>) per row.
DenseTensor softmax_vjp(const DenseTensor& probs, const DenseTensor& grad_probs);

// Central-difference check of an analytic gradient over all parameters;
// returns the worst relative error.
using MlpLossFn = std::function<std::pair<double, MlpParams>(const MlpParams&)>;
double finite_diff_check(const MlpLossFn& loss_and_grad, const MlpParams& params,
                         double epsilon);

// Element-wise parameter helpers. tensor_list yields every tensor in a fixed
// order (layer weight, layer bias, ...).
std::vector<const DenseTensor*> tensor_list(const MlpParams& p);
std::vector<DenseTensor*> tensor_list(MlpParams& p);
MlpParams zeros_like(const MlpParams& p);
void axpy(MlpParams& dst, double a, const MlpParams& x);  // dst += a * x
double squared_l2(const MlpParams& p);

}  // namespace fedora
