#include <doctest.h>

#include <cmath>

#include "fedora/attacks.hpp"
#include "fedora/dataset.hpp"
#include "fedora/errors.hpp"

using namespace fedora;

namespace {

// Model whose output is a constant logit row regardless of input.
SplitModel constant_model(std::size_t in_dim, const std::vector<double>& logits) {
  SplitModel m;
  MlpParams bottom;
  MlpLayer bl;
  bl.weight = DenseTensor({in_dim, 2});
  bl.bias = DenseTensor({2});
  bottom.layers.push_back(bl);
  m.params.bottoms.push_back(bottom);

  MlpParams top;
  MlpLayer tl;
  tl.weight = DenseTensor({2, logits.size()});
  tl.bias = DenseTensor({logits.size()}, logits);
  top.layers.push_back(tl);
  m.params.top = top;
  return m;
}

// Identity pass-through: logits equal raw features (scaled).
SplitModel passthrough_model(std::size_t dim, double scale) {
  SplitModel m;
  MlpParams bottom;
  MlpLayer bl;
  bl.weight = DenseTensor({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) bl.weight(i, i) = 1.0;
  bl.bias = DenseTensor({dim});
  bottom.layers.push_back(bl);
  m.params.bottoms.push_back(bottom);

  MlpParams top;
  MlpLayer tl;
  tl.weight = DenseTensor({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) tl.weight(i, i) = scale;
  tl.bias = DenseTensor({dim});
  top.layers.push_back(tl);
  m.params.top = top;
  return m;
}

VerticalDataset dataset_from_matrix(const DenseTensor& features, std::vector<int> labels,
                                    int classes) {
  VerticalDataset d;
  d.party_features.push_back(features);
  d.labels = std::move(labels);
  d.num_classes = classes;
  d.sample_ids.resize(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) d.sample_ids[i] = static_cast<long long>(i);
  return d;
}

}  // namespace

TEST_CASE("accuracy counts argmax hits") {
  SplitModel m = constant_model(3, {0.0, 5.0, 1.0});  // always predicts class 1
  VerticalDataset all_ones = dataset_from_matrix(DenseTensor({4, 3}), {1, 1, 1, 1}, 3);
  VerticalDataset none = dataset_from_matrix(DenseTensor({4, 3}), {0, 2, 0, 2}, 3);
  CHECK(accuracy(m, all_ones, all_rows(all_ones)) == 1.0);
  CHECK(accuracy(m, none, all_rows(none)) == 0.0);

  // Hand-built 3-sample case: logits = 4 * features.
  SplitModel pass = passthrough_model(3, 4.0);
  DenseTensor f({3, 3}, {1, 0, 0, 0, 0, 1, 0, 1, 0});
  VerticalDataset d = dataset_from_matrix(f, {0, 2, 2}, 3);  // predictions: 0, 2, 1
  CHECK(accuracy(pass, d, all_rows(d)) == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(accuracy(m, d, std::vector<std::size_t>{}), ValidationError);
}

TEST_CASE("indistinguishable members and non-members give chance-level AUC") {
  SplitModel m = constant_model(4, {0.3, -0.2, 0.1, 0.4});
  VerticalDataset members = dataset_from_matrix(DenseTensor({400, 4}), std::vector<int>(400, 0), 4);
  VerticalDataset outsiders = dataset_from_matrix(DenseTensor({400, 4}), std::vector<int>(400, 0), 4);

  MiaFitOptions opts;
  opts.seed = 5;
  ShadowAttackModel attack =
      mia_fit(m, members, all_rows(members), outsiders, all_rows(outsiders), opts);
  const double auc = attack_auc(attack, m, members, all_rows(members), outsiders,
                                all_rows(outsiders));
  CHECK(auc == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("separable attack data trains a near-perfect shadow model") {
  // Member rows produce confident one-hot outputs; non-members uniform.
  const std::size_t dim = 4;
  SplitModel model = passthrough_model(dim, 12.0);

  DenseTensor member_f({200, dim});
  std::vector<int> member_y(200, 0);
  for (std::size_t i = 0; i < 200; ++i) member_f(i, i % dim) = 1.0;  // one-hot rows
  VerticalDataset members = dataset_from_matrix(member_f, member_y, static_cast<int>(dim));

  DenseTensor outsider_f({200, dim});  // all zeros -> uniform outputs
  VerticalDataset outsiders =
      dataset_from_matrix(outsider_f, std::vector<int>(200, 0), static_cast<int>(dim));

  MiaFitOptions opts;
  opts.seed = 11;
  ShadowAttackModel attack =
      mia_fit(model, members, all_rows(members), outsiders, all_rows(outsiders), opts);

  const double asr_members = mia_asr(attack, model, members, all_rows(members));
  const double asr_outsiders = mia_asr(attack, model, outsiders, all_rows(outsiders));
  CHECK(asr_members >= 0.95);
  CHECK(asr_outsiders <= 0.05);

  // Deterministic fit.
  ShadowAttackModel again =
      mia_fit(model, members, all_rows(members), outsiders, all_rows(outsiders), opts);
  for (std::size_t i = 0; i < attack.weights.size(); ++i) {
    CHECK(attack.weights[i] == again.weights[i]);
  }
  CHECK(attack.bias == again.bias);

  // Self-consistency: ASR on the original member rows equals the attack's
  // member recall computed directly.
  DenseTensor probs = predict_probs(model, members, all_rows(members));
  std::size_t recalled = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::span<const double> row(probs.values().data() + i * probs.cols(), probs.cols());
    if (attack.member_probability(row) > 0.5) ++recalled;
  }
  CHECK(asr_members == doctest::Approx(static_cast<double>(recalled) / 200.0));

  CHECK_THROWS_AS(
      mia_fit(model, members, std::vector<std::size_t>{}, outsiders, all_rows(outsiders), opts),
      ValidationError);
}

TEST_CASE("inject_backdoor stamps exactly patch^2 pixels and is idempotent") {
  DenseTensor images({3, 16, 16});
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i] = 0.25 + 0.001 * static_cast<double>(i % 7);
  }
  TriggerSpec trigger;
  trigger.patch = 2;
  trigger.target_label = 0;
  trigger.pixel_value = 1.0;

  BackdoorBatch out = inject_backdoor(images, trigger);
  REQUIRE(out.labels == std::vector<int>{0, 0, 0});
  std::size_t changed = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 16; ++i) {
      for (std::size_t j = 0; j < 16; ++j) {
        if (out.images(b, i, j) != images(b, i, j)) {
          ++changed;
          CHECK(out.images(b, i, j) == 1.0);
          CHECK(i >= 14);
          CHECK(j >= 14);
        }
      }
    }
  }
  CHECK(changed == 3 * 4);

  BackdoorBatch twice = inject_backdoor(out.images, trigger);
  for (std::size_t i = 0; i < twice.images.size(); ++i) {
    CHECK(twice.images[i] == out.images[i]);
  }

  TriggerSpec huge;
  huge.patch = 17;
  CHECK_THROWS_AS(inject_backdoor(images, huge), ValidationError);
}

TEST_CASE("bd_asr extremes") {
  SplitModel always = constant_model(3, {9.0, 0.0, 0.0});
  SplitModel never = constant_model(3, {0.0, 9.0, 0.0});
  VerticalDataset d = dataset_from_matrix(DenseTensor({5, 3}), {0, 0, 0, 0, 0}, 3);
  CHECK(bd_asr(always, d, all_rows(d), 0) == 1.0);
  CHECK(bd_asr(never, d, all_rows(d), 0) == 0.0);
}
