#include "fedora/vfl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "fedora/errors.hpp"

namespace fedora {

std::vector<const DenseTensor*> tensor_list(const ParamSet& p) {
  std::vector<const DenseTensor*> out;
  for (const MlpParams& b : p.bottoms) {
    for (const DenseTensor* t : tensor_list(b)) out.push_back(t);
  }
  for (const DenseTensor* t : tensor_list(p.top)) out.push_back(t);
  return out;
}

std::vector<DenseTensor*> tensor_list(ParamSet& p) {
  std::vector<DenseTensor*> out;
  for (MlpParams& b : p.bottoms) {
    for (DenseTensor* t : tensor_list(b)) out.push_back(t);
  }
  for (DenseTensor* t : tensor_list(p.top)) out.push_back(t);
  return out;
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z;
  z.bottoms.reserve(p.bottoms.size());
  for (const MlpParams& b : p.bottoms) z.bottoms.push_back(zeros_like(b));
  z.top = zeros_like(p.top);
  return z;
}

void axpy(ParamSet& dst, double a, const ParamSet& x) {
  if (dst.bottoms.size() != x.bottoms.size()) {
    throw DimensionError("axpy: party count mismatch");
  }
  for (std::size_t i = 0; i < dst.bottoms.size(); ++i) axpy(dst.bottoms[i], a, x.bottoms[i]);
  axpy(dst.top, a, x.top);
}

double squared_l2(const ParamSet& p) {
  double acc = 0.0;
  for (const DenseTensor* t : tensor_list(p)) acc += squared_l2(*t);
  return acc;
}

double l2_distance(const ParamSet& a, const ParamSet& b) {
  auto ta = tensor_list(a);
  auto tb = tensor_list(b);
  if (ta.size() != tb.size()) throw DimensionError("l2_distance: parameter structure mismatch");
  double acc = 0.0;
  for (std::size_t t = 0; t < ta.size(); ++t) {
    if (!ta[t]->same_shape(*tb[t])) throw DimensionError("l2_distance: tensor shape mismatch");
    for (std::size_t i = 0; i < ta[t]->size(); ++i) {
      const double d = (*ta[t])[i] - (*tb[t])[i];
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

std::size_t SplitModel::embedding_width() const {
  std::size_t w = 0;
  for (const MlpParams& b : params.bottoms) w += b.output_dim();
  return w;
}

void SplitModel::validate() const {
  if (params.bottoms.empty()) throw DimensionError("split model: no bottom models");
  for (const MlpParams& b : params.bottoms) b.validate();
  params.top.validate();
  if (embedding_width() != params.top.input_dim()) {
    throw DimensionError("split model: bottom widths sum to " + std::to_string(embedding_width()) +
                         " but top expects " + std::to_string(params.top.input_dim()));
  }
}

std::vector<long long> psi_align(const std::vector<std::vector<long long>>& party_ids) {
  if (party_ids.empty()) throw AlignmentError("psi_align: no parties");
  std::set<long long> common;
  for (std::size_t p = 0; p < party_ids.size(); ++p) {
    std::set<long long> ids(party_ids[p].begin(), party_ids[p].end());
    if (ids.size() != party_ids[p].size()) {
      throw ValidationError("psi_align: duplicate ids in party " + std::to_string(p));
    }
    if (p == 0) {
      common = std::move(ids);
    } else {
      std::set<long long> next;
      std::set_intersection(common.begin(), common.end(), ids.begin(), ids.end(),
                            std::inserter(next, next.begin()));
      common = std::move(next);
    }
  }
  if (common.empty()) throw AlignmentError("psi_align: empty intersection");
  return {common.begin(), common.end()};
}

namespace {

DenseTensor gather_rows(const DenseTensor& m, std::span<const std::size_t> rows) {
  DenseTensor out({rows.size(), m.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) {
      throw ValidationError("row " + std::to_string(rows[i]) + " out of " +
                            std::to_string(m.rows()));
    }
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(rows[i], j);
  }
  return out;
}

}  // namespace

RoundForward forward_round(const SplitModel& model, const VerticalDataset& data,
                           std::span<const std::size_t> rows, double noise_std,
                           std::mt19937_64* rng) {
  if (model.params.bottoms.size() != data.num_parties()) {
    throw DimensionError("forward_round: model has " + std::to_string(model.params.bottoms.size()) +
                         " bottoms but data has " + std::to_string(data.num_parties()) +
                         " parties");
  }
  if (noise_std < 0.0) throw ValidationError("forward_round: noise_std must be >= 0");
  if (noise_std > 0.0 && rng == nullptr) {
    throw ValidationError("forward_round: noise requested without rng");
  }

  std::vector<DenseTensor> embeddings;
  embeddings.reserve(data.num_parties());
  for (std::size_t p = 0; p < data.num_parties(); ++p) {
    DenseTensor inputs = gather_rows(data.party_features[p], rows);
    DenseTensor h = mlp_forward(model.params.bottoms[p], inputs);
    if (noise_std > 0.0) {
      std::normal_distribution<double> noise(0.0, noise_std);
      for (double& v : h.values()) v += noise(*rng);
    }
    embeddings.push_back(std::move(h));
  }

  std::vector<const DenseTensor*> parts;
  parts.reserve(embeddings.size());
  for (const DenseTensor& h : embeddings) parts.push_back(&h);

  RoundForward out;
  out.global_embedding = hconcat(parts);
  out.logits = mlp_forward(model.params.top, out.global_embedding);
  return out;
}

ParamSet backward_round(const SplitModel& model, const VerticalDataset& data,
                        std::span<const std::size_t> rows, const RoundForward& forward,
                        const DenseTensor& loss_grad_logits) {
  if (!loss_grad_logits.same_shape(forward.logits)) {
    throw DimensionError("backward_round: loss grad shape does not match logits");
  }
  MlpBackwardResult top = mlp_backward(model.params.top, forward.global_embedding, loss_grad_logits);

  ParamSet grads;
  grads.top = std::move(top.param_grads);
  grads.bottoms.reserve(model.params.bottoms.size());
  std::size_t col = 0;
  for (std::size_t p = 0; p < model.params.bottoms.size(); ++p) {
    const std::size_t width = model.params.bottoms[p].output_dim();
    DenseTensor slice = hslice(top.input_grads, col, col + width);
    col += width;
    DenseTensor inputs = gather_rows(data.party_features[p], rows);
    grads.bottoms.push_back(mlp_backward(model.params.bottoms[p], inputs, slice).param_grads);
  }
  if (col != top.input_grads.cols()) {
    throw DimensionError("backward_round: party widths sum to " + std::to_string(col) +
                         " but embedding has " + std::to_string(top.input_grads.cols()));
  }
  return grads;
}

std::vector<double> vfl_train(SplitModel& model, const VerticalDataset& data,
                              const TrainOptions& options) {
  if (options.lr <= 0.0) throw ValidationError("vfl_train: lr must be > 0");
  if (options.batch_size == 0) throw ValidationError("vfl_train: batch_size must be >= 1");
  model.validate();
  data.validate();

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order = all_rows(data);
  std::vector<double> history;
  history.reserve(options.epochs);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      RoundForward fwd = forward_round(model, data, rows, options.noise_std,
                                       options.noise_std > 0.0 ? &rng : nullptr);
      std::vector<int> batch_labels(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = data.labels[rows[i]];
      SoftmaxXentResult xe = softmax_cross_entropy(fwd.logits, batch_labels);
      if (!std::isfinite(xe.loss)) {
        throw DivergenceError("vfl_train: non-finite loss at epoch " + std::to_string(epoch));
      }
      ParamSet grads = backward_round(model, data, rows, fwd, xe.grad_logits);
      axpy(model.params, -options.lr, grads);
      loss_sum += xe.loss;
      ++n_batches;
    }
    history.push_back(n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0);
  }
  return history;
}

SplitModel build_split_model(const std::vector<PartySpec>& parties, std::size_t num_classes,
                             const std::vector<std::size_t>& top_hidden, std::uint64_t seed) {
  if (parties.empty()) throw ValidationError("build_split_model: no parties");
  if (num_classes < 2) throw ValidationError("build_split_model: need at least 2 classes");
  std::mt19937_64 rng(seed);
  SplitModel model;
  std::size_t emb = 0;
  for (const PartySpec& s : parties) {
    if (s.bottom_arch.empty()) {
      throw ValidationError("build_split_model: party " + std::to_string(s.party_id) +
                            " has empty bottom arch");
    }
    model.params.bottoms.push_back(make_mlp(s.col_end - s.col_begin, s.bottom_arch, rng));
    emb += s.bottom_arch.back();
  }
  std::vector<std::size_t> top_dims = top_hidden;
  top_dims.push_back(num_classes);
  model.params.top = make_mlp(emb, top_dims, rng);
  return model;
}

DenseTensor predict_logits(const SplitModel& model, const VerticalDataset& data,
                           std::span<const std::size_t> rows) {
  return forward_round(model, data, rows).logits;
}

DenseTensor predict_probs(const SplitModel& model, const VerticalDataset& data,
                          std::span<const std::size_t> rows) {
  return softmax(predict_logits(model, data, rows));
}

double finite_diff_check(const ParamSetLossFn& loss_and_grad, const ParamSet& params,
                         double epsilon) {
  if (epsilon <= 0.0) throw ValidationError("finite_diff_check: epsilon must be > 0");
  auto [loss0, analytic] = loss_and_grad(params);
  if (!std::isfinite(loss0)) throw DivergenceError("finite_diff_check: non-finite loss");

  ParamSet probe = params;
  auto probe_tensors = tensor_list(probe);
  auto grad_tensors = tensor_list(analytic);
  if (probe_tensors.size() != grad_tensors.size()) {
    throw DimensionError("finite_diff_check: gradient structure mismatch");
  }
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
