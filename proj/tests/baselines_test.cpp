#include <doctest.h>

#include <cmath>

#include "fedora/attacks.hpp"
#include "fedora/baselines.hpp"
#include "fedora/dataset.hpp"
#include "fedora/errors.hpp"

using namespace fedora;

namespace {

struct Fixture {
  VerticalDataset data;
  std::vector<PartySpec> specs;
  SplitModel trained;
};

Fixture make_fixture(std::uint64_t seed) {
  Fixture f;
  VerticalDataset table = gen_tabular(3, 80, 6, 3.0, seed);
  f.specs.resize(2);
  f.specs[0] = {0, PartyRole::kPassive, 0, 3, {5}};
  f.specs[1] = {1, PartyRole::kActive, 3, 6, {5}};
  f.data = vertical_partition(table, f.specs);
  f.trained = build_split_model(f.specs, 3, {8}, seed + 1);
  TrainOptions opts{40, 0.08, 32, seed + 2, 0.0};
  vfl_train(f.trained, f.data, opts);
  return f;
}

bool params_equal(const ParamSet& a, const ParamSet& b) {
  auto ta = tensor_list(a);
  auto tb = tensor_list(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t t = 0; t < ta.size(); ++t) {
    if (!ta[t]->same_shape(*tb[t])) return false;
    for (std::size_t i = 0; i < ta[t]->size(); ++i) {
      if ((*ta[t])[i] != (*tb[t])[i]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("retrain with an empty unlearning set reproduces original training") {
  Fixture f = make_fixture(211);
  PartitionResult everything;
  everything.remain_rows = all_rows(f.data);

  BaselineConfig cfg;
  cfg.iterations = 40;
  cfg.lr = 0.08;
  cfg.batch_size = 32;
  cfg.seed = 213;
  SplitModel a = retrain(f.data, everything, f.specs, {8}, cfg);

  SplitModel direct = build_split_model(f.specs, 3, {8}, 213);
  TrainOptions opts{40, 0.08, 32, 213, 0.0};
  vfl_train(direct, f.data, opts);
  CHECK(params_equal(a.params, direct.params));
}

TEST_CASE("retrain is deterministic and never predicts a fully removed class") {
  Fixture f = make_fixture(223);
  PartitionResult part = split_unlearn(f.data, {{2}, 1.0}, 227);  // label unlearning

  BaselineConfig cfg;
  cfg.iterations = 40;
  cfg.lr = 0.08;
  cfg.batch_size = 32;
  cfg.seed = 229;
  SplitModel a = retrain(f.data, part, f.specs, {8}, cfg);
  SplitModel b = retrain(f.data, part, f.specs, {8}, cfg);
  CHECK(params_equal(a.params, b.params));

  // Accuracy on the removed class stays near zero for the pinned seed.
  CHECK(accuracy(a, f.data, part.unlearn_rows) <= 0.1);

  PartitionResult empty_dr;
  empty_dr.unlearn_rows = all_rows(f.data);
  CHECK_THROWS_AS(retrain(f.data, empty_dr, f.specs, {8}, cfg), ValidationError);
}

TEST_CASE("gradient ascent leaves the model untouched with zero work") {
  Fixture f = make_fixture(233);
  PartitionResult part = split_unlearn(f.data, {{1}, 0.5}, 239);

  BaselineConfig cfg;
  cfg.iterations = 0;
  cfg.ga_finetune_rounds = 0;
  cfg.seed = 241;
  SplitModel out = gradient_ascent_unlearn(f.trained, f.data, part, cfg);
  CHECK(params_equal(out.params, f.trained.params));
}

TEST_CASE("gradient ascent with zero ascent steps equals fine-tuning on D_r") {
  Fixture f = make_fixture(251);
  PartitionResult part = split_unlearn(f.data, {{1}, 0.5}, 257);

  BaselineConfig cfg;
  cfg.iterations = 0;
  cfg.ga_finetune_rounds = 3;
  cfg.lr = 0.05;
  cfg.batch_size = 16;
  cfg.seed = 263;
  SplitModel ga = gradient_ascent_unlearn(f.trained, f.data, part, cfg);

  // Independent fine-tune: train on the D_r view with the same stream.
  SplitModel ft = f.trained;
  VerticalDataset retained = subset(f.data, part.remain_rows);
  TrainOptions opts{3, 0.05, 16, 263, 0.0};
  vfl_train(ft, retained, opts);
  CHECK(params_equal(ga.params, ft.params));
}

TEST_CASE("gradient ascent drops accuracy on the unlearning set") {
  Fixture f = make_fixture(269);
  PartitionResult part = split_unlearn(f.data, {{1}, 0.5}, 271);

  const double before = accuracy(f.trained, f.data, part.unlearn_rows);
  BaselineConfig cfg;
  cfg.iterations = 10;
  cfg.lr = 0.01;
  cfg.seed = 277;
  SplitModel out = gradient_ascent_unlearn(f.trained, f.data, part, cfg);
  const double after = accuracy(out, f.data, part.unlearn_rows);
  CHECK(after < before);
}

TEST_CASE("gradient ascent reports divergence instead of NaN") {
  Fixture f = make_fixture(281);
  PartitionResult part = split_unlearn(f.data, {{1}, 0.5}, 283);

  BaselineConfig cfg;
  cfg.iterations = 200;
  cfg.lr = 1e8;
  cfg.seed = 293;
  CHECK_THROWS_AS(gradient_ascent_unlearn(f.trained, f.data, part, cfg), DivergenceError);
}
