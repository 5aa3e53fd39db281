#include "fedora/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedora/errors.hpp"

namespace fedora {

namespace {

std::vector<int> argmax_rows(const DenseTensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

// Attack features: probabilities sorted descending, max probability, entropy.
std::vector<double> attack_features(std::span<const double> probs_row) {
  std::vector<double> f(probs_row.begin(), probs_row.end());
  std::sort(f.begin(), f.end(), std::greater<double>());
  const double max_p = f.empty() ? 0.0 : f.front();
  double entropy = 0.0;
  for (double p : probs_row) {
    if (p > 0.0) entropy -= p * std::log(p);
  }
  f.push_back(max_p);
  f.push_back(entropy);
  return f;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

DenseTensor feature_matrix(const SplitModel& model, const VerticalDataset& data,
                           std::span<const std::size_t> rows) {
  const DenseTensor probs = predict_probs(model, data, rows);
  const std::size_t classes = probs.cols();
  DenseTensor out({rows.size(), classes + 2});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::span<const double> row(probs.values().data() + i * classes, classes);
    const std::vector<double> f = attack_features(row);
    for (std::size_t j = 0; j < f.size(); ++j) out(i, j) = f[j];
  }
  return out;
}

}  // namespace

double accuracy(const SplitModel& model, const VerticalDataset& data,
                std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("accuracy: empty row set");
  const DenseTensor logits = predict_logits(model, data, rows);
  const std::vector<int> pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (pred[i] == data.labels[rows[i]]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

double ShadowAttackModel::member_probability(std::span<const double> probs_row) const {
  const std::vector<double> f = attack_features(probs_row);
  if (f.size() != weights.size()) {
    throw DimensionError("shadow attack: feature width " + std::to_string(f.size()) +
                         " vs weights " + std::to_string(weights.size()));
  }
  double z = bias;
  for (std::size_t i = 0; i < f.size(); ++i) z += weights[i] * f[i];
  return sigmoid(z);
}

ShadowAttackModel mia_fit(const SplitModel& model, const VerticalDataset& member_data,
                          std::span<const std::size_t> member_rows,
                          const VerticalDataset& nonmember_data,
                          std::span<const std::size_t> nonmember_rows,
                          const MiaFitOptions& options) {
  if (member_rows.empty() || nonmember_rows.empty()) {
    throw ValidationError("mia_fit: degenerate single-class attack data");
  }

  if (options.member_ratio < 1.0) {
    throw ValidationError("mia_fit: member_ratio must be >= 1");
  }

  // Subsample the member side down to the configured ratio; ratio 1 balances
  // the two sides so the 0.5 threshold carries no prior.
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> members(member_rows.begin(), member_rows.end());
  std::vector<std::size_t> nonmembers(nonmember_rows.begin(), nonmember_rows.end());
  const std::size_t member_cap = static_cast<std::size_t>(
      options.member_ratio * static_cast<double>(nonmembers.size()));
  std::shuffle(members.begin(), members.end(), rng);
  std::shuffle(nonmembers.begin(), nonmembers.end(), rng);
  if (members.size() > member_cap) members.resize(std::max<std::size_t>(1, member_cap));

  const DenseTensor xm = feature_matrix(model, member_data, members);
  const DenseTensor xn = feature_matrix(model, nonmember_data, nonmembers);
  const std::size_t width = xm.cols();
  const std::size_t n = members.size() + nonmembers.size();

  ShadowAttackModel attack;
  attack.weights = DenseTensor({width});
  attack.num_classes = member_data.num_classes;

  // Full-batch logistic regression with a small l2 term.
  const double reg = 1e-4;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    DenseTensor gw({width});
    double gb = 0.0;
    auto accumulate = [&](const DenseTensor& x, double label) {
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double z = attack.bias;
        for (std::size_t j = 0; j < width; ++j) z += attack.weights[j] * x(i, j);
        const double err = sigmoid(z) - label;
        for (std::size_t j = 0; j < width; ++j) gw[j] += err * x(i, j);
        gb += err;
      }
    };
    accumulate(xm, 1.0);
    accumulate(xn, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < width; ++j) {
      attack.weights[j] -= options.lr * (gw[j] * inv_n + reg * attack.weights[j]);
    }
    attack.bias -= options.lr * gb * inv_n;
  }
  return attack;
}

double mia_asr(const ShadowAttackModel& attack, const SplitModel& model,
               const VerticalDataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("mia_asr: empty row set");
  const DenseTensor probs = predict_probs(model, data, rows);
  const std::size_t classes = probs.cols();
  std::size_t members = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::span<const double> row(probs.values().data() + i * classes, classes);
    if (attack.member_probability(row) > 0.5) ++members;
  }
  return static_cast<double>(members) / static_cast<double>(rows.size());
}

double attack_auc(const ShadowAttackModel& attack, const SplitModel& model,
                  const VerticalDataset& member_data, std::span<const std::size_t> member_rows,
                  const VerticalDataset& nonmember_data,
                  std::span<const std::size_t> nonmember_rows) {
  if (member_rows.empty() || nonmember_rows.empty()) {
    throw ValidationError("attack_auc: empty row set");
  }
  auto scores_of = [&](const VerticalDataset& data, std::span<const std::size_t> rows) {
    const DenseTensor probs = predict_probs(model, data, rows);
    const std::size_t classes = probs.cols();
    std::vector<double> s(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::span<const double> row(probs.values().data() + i * classes, classes);
      s[i] = attack.member_probability(row);
    }
    return s;
  };
  const std::vector<double> pos = scores_of(member_data, member_rows);
  const std::vector<double> neg = scores_of(nonmember_data, nonmember_rows);

  // Rank-sum AUC with average ranks for ties.
  std::vector<std::pair<double, int>> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.emplace_back(s, 1);
  for (double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double n_pos = static_cast<double>(pos.size());
  const double n_neg = static_cast<double>(neg.size());
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

BackdoorBatch inject_backdoor(const DenseTensor& images, const TriggerSpec& trigger) {
  if (images.ndim() != 3) throw DimensionError("inject_backdoor: expected batch x H x W");
  const std::size_t batch = images.dim(0), h = images.dim(1), w = images.dim(2);
  if (trigger.patch == 0 || trigger.patch > h || trigger.patch > w) {
    throw ValidationError("inject_backdoor: " + std::to_string(trigger.patch) + "x" +
                          std::to_string(trigger.patch) + " trigger does not fit " +
                          std::to_string(h) + "x" + std::to_string(w));
  }
  BackdoorBatch out;
  out.images = images;
  out.labels.assign(batch, trigger.target_label);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = h - trigger.patch; i < h; ++i) {
      for (std::size_t j = w - trigger.patch; j < w; ++j) {
        out.images(b, i, j) = trigger.pixel_value;
      }
    }
  }
  return out;
}

double bd_asr(const SplitModel& model, const VerticalDataset& data,
              std::span<const std::size_t> rows, int target_label) {
  if (rows.empty()) throw ValidationError("bd_asr: empty row set");
  const DenseTensor logits = predict_logits(model, data, rows);
  const std::vector<int> pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (int p : pred) {
    if (p == target_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

}  // namespace fedora
