#include "fedora/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedora/errors.hpp"

namespace fedora {

std::size_t MlpParams::input_dim() const {
  if (layers.empty()) throw DimensionError("mlp: no layers");
  return layers.front().weight.rows();
}

std::size_t MlpParams::output_dim() const {
  if (layers.empty()) throw DimensionError("mlp: no layers");
  return layers.back().weight.cols();
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const MlpLayer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw DimensionError("mlp: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const MlpLayer& l = layers[i];
    if (l.weight.ndim() != 2 || l.bias.ndim() != 1) {
      throw DimensionError("mlp: layer " + std::to_string(i) + " has malformed tensors");
    }
    if (l.bias.size() != l.weight.cols()) {
      throw DimensionError("mlp: layer " + std::to_string(i) + " bias width " +
                           std::to_string(l.bias.size()) + " vs weight cols " +
                           std::to_string(l.weight.cols()));
    }
    if (i > 0 && layers[i - 1].weight.cols() != l.weight.rows()) {
      throw DimensionError("mlp: layers " + std::to_string(i - 1) + " -> " + std::to_string(i) +
                           " do not compose (" + std::to_string(layers[i - 1].weight.cols()) +
                           " vs " + std::to_string(l.weight.rows()) + ")");
    }
    if (!l.weight.all_finite() || !l.bias.all_finite()) {
      throw ValidationError("mlp: non-finite parameter in layer " + std::to_string(i));
    }
  }
}

MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& layer_dims,
                   std::mt19937_64& rng) {
  if (layer_dims.empty()) throw ValidationError("make_mlp: empty layer list");
  MlpParams p;
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    const std::size_t out = layer_dims[i];
    if (out == 0) throw ValidationError("make_mlp: zero-width layer");
    MlpLayer layer;
    layer.weight = DenseTensor({in, out});
    layer.bias = DenseTensor({out});
    layer.act = (i + 1 == layer_dims.size()) ? Activation::kIdentity : Activation::kRelu;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    for (double& v : layer.weight.values()) v = dist(rng);
    p.layers.push_back(std::move(layer));
    in = out;
  }
  return p;
}

namespace {

void apply_activation(DenseTensor& z, Activation act) {
  if (act == Activation::kRelu) {
    for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
  }
}

DenseTensor affine(const DenseTensor& x, const MlpLayer& l, std::size_t layer_idx) {
  if (x.cols() != l.weight.rows()) {
    throw DimensionError("mlp layer " + std::to_string(layer_idx) + ": input width " +
                         std::to_string(x.cols()) + " vs weight rows " +
                         std::to_string(l.weight.rows()));
  }
  DenseTensor z = matmul(x, l.weight);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += l.bias[j];
  }
  return z;
}

}  // namespace

DenseTensor mlp_forward(const MlpParams& params, const DenseTensor& inputs) {
  if (params.layers.empty()) throw DimensionError("mlp_forward: no layers");
  DenseTensor a = inputs;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    a = affine(a, params.layers[i], i);
    apply_activation(a, params.layers[i].act);
  }
  return a;
}

MlpBackwardResult mlp_backward(const MlpParams& params, const DenseTensor& inputs,
                               const DenseTensor& upstream_grad) {
  const std::size_t n_layers = params.layers.size();
  if (n_layers == 0) throw DimensionError("mlp_backward: no layers");

  // Forward with cached pre-activations.
  std::vector<DenseTensor> activations;  // a_0 = inputs, a_i = post-activation of layer i
  std::vector<DenseTensor> pre_acts;
  activations.reserve(n_layers + 1);
  pre_acts.reserve(n_layers);
  activations.push_back(inputs);
  for (std::size_t i = 0; i < n_layers; ++i) {
    DenseTensor z = affine(activations.back(), params.layers[i], i);
    pre_acts.push_back(z);
    apply_activation(z, params.layers[i].act);
    activations.push_back(std::move(z));
  }

  if (!upstream_grad.same_shape(activations.back())) {
    throw DimensionError("mlp_backward: upstream grad shape does not match forward output");
  }

  MlpBackwardResult res;
  res.param_grads.layers.resize(n_layers);
  DenseTensor g = upstream_grad;
  for (std::size_t i = n_layers; i-- > 0;) {
    const MlpLayer& l = params.layers[i];
    if (l.act == Activation::kRelu) {
      const DenseTensor& z = pre_acts[i];
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (z[k] <= 0.0) g[k] = 0.0;
      }
    }
    MlpLayer& gl = res.param_grads.layers[i];
    gl.act = l.act;
    gl.weight = matmul_ta(activations[i], g);
    gl.bias = DenseTensor({l.bias.size()});
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) gl.bias[c] += g(r, c);
    }
    g = matmul_tb(g, l.weight);
  }
  res.input_grads = std::move(g);
  return res;
}

DenseTensor softmax(const DenseTensor& logits) {
  if (logits.ndim() != 2) throw DimensionError("softmax: expected batch x classes");
  DenseTensor p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double m = p(i, 0);
    for (std::size_t j = 1; j < p.cols(); ++j) m = std::max(m, p(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      p(i, j) = std::exp(p(i, j) - m);
      sum += p(i, j);
    }
    for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) /= sum;
  }
  return p;
}

DenseTensor softmax_vjp(const DenseTensor& probs, const DenseTensor& grad_probs) {
  if (!probs.same_shape(grad_probs)) throw DimensionError("softmax_vjp: shape mismatch");
  DenseTensor g({probs.rows(), probs.cols()});
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) dot += grad_probs(i, j) * probs(i, j);
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      g(i, j) = probs(i, j) * (grad_probs(i, j) - dot);
    }
  }
  return g;
}

SoftmaxXentResult softmax_cross_entropy(const DenseTensor& logits,
                                        const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw DimensionError("softmax_cross_entropy: expected batch x classes");
  const std::size_t batch = logits.rows(), classes = logits.cols();
  if (labels.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(batch));
  }
  SoftmaxXentResult res;
  res.probs = softmax(logits);
  res.grad_logits = res.probs;
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(y) +
                            " out of [0, " + std::to_string(classes) + ") at row " +
                            std::to_string(i));
    }
    // -log p[y] computed from the stabilized softmax.
    double m = logits(i, 0);
    for (std::size_t j = 1; j < classes; ++j) m = std::max(m, logits(i, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < classes; ++j) lse += std::exp(logits(i, j) - m);
    loss += (m + std::log(lse)) - logits(i, static_cast<std::size_t>(y));
    res.grad_logits(i, static_cast<std::size_t>(y)) -= 1.0;
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  loss *= inv_batch;
  for (double& v : res.grad_logits.values()) v *= inv_batch;
  res.loss = loss;
  return res;
}

std::vector<const DenseTensor*> tensor_list(const MlpParams& p) {
  std::vector<const DenseTensor*> out;
  out.reserve(p.layers.size() * 2);
  for (const MlpLayer& l : p.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<DenseTensor*> tensor_list(MlpParams& p) {
  std::vector<DenseTensor*> out;
  out.reserve(p.layers.size() * 2);
  for (MlpLayer& l : p.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  z.layers.reserve(p.layers.size());
  for (const MlpLayer& l : p.layers) {
    MlpLayer zl;
    zl.weight = DenseTensor(l.weight.shape());
    zl.bias = DenseTensor(l.bias.shape());
    zl.act = l.act;
    z.layers.push_back(std::move(zl));
  }
  return z;
}

void axpy(MlpParams& dst, double a, const MlpParams& x) {
  auto d = tensor_list(dst);
  auto s = tensor_list(x);
  if (d.size() != s.size()) throw DimensionError("axpy: parameter structure mismatch");
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (!d[t]->same_shape(*s[t])) throw DimensionError("axpy: tensor shape mismatch");
    for (std::size_t i = 0; i < d[t]->size(); ++i) (*d[t])[i] += a * (*s[t])[i];
  }
}

double squared_l2(const MlpParams& p) {
  double acc = 0.0;
  for (const DenseTensor* t : tensor_list(p)) acc += squared_l2(*t);
  return acc;
}

double finite_diff_check(const MlpLossFn& loss_and_grad, const MlpParams& params,
                         double epsilon) {
  if (epsilon <= 0.0) throw ValidationError("finite_diff_check: epsilon must be > 0");
  auto [loss0, analytic] = loss_and_grad(params);
  if (!std::isfinite(loss0)) throw DivergenceError("finite_diff_check: non-finite loss");

  MlpParams probe = params;
  auto probe_tensors = tensor_list(probe);
  auto grad_tensors = tensor_list(analytic);
  double worst = 0.0;
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    for (std::size_t i = 0; i < probe_tensors[t]->size(); ++i) {
      double& slot = (*probe_tensors[t])[i];
      const double saved = slot;
      slot = saved + epsilon;
      const double up = loss_and_grad(probe).first;
      slot = saved - epsilon;
      const double down = loss_and_grad(probe).first;
      slot = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw DivergenceError("finite_diff_check: non-finite loss during probing");
      }
      const double fd = (up - down) / (2.0 * epsilon);
      const double an = (*grad_tensors[t])[i];
      const double denom = std::max({1e-6, std::fabs(fd), std::fabs(an)});
      worst = std::max(worst, std::fabs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace fedora
