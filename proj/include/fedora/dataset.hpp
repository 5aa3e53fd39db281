#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedora/tensor.hpp"

namespace fedora {

enum class PartyRole { kPassive, kActive };

// One feature-holding party; exactly one party per setup is active and owns
// the labels. feature slice is [col_begin, col_end) of the global space.
struct PartySpec {
  int party_id = 0;
  PartyRole role = PartyRole::kPassive;
  std::size_t col_begin = 0;
  std::size_t col_end = 0;
  std::vector<std::size_t> bottom_arch;  // layer widths, last = embedding dim
};

void validate_party_specs(const std::vector<PartySpec>& specs, std::size_t total_width);

// Aligned vertical dataset: every party holds a feature matrix over the same
// sample ordering; labels conceptually live at the active party.
struct VerticalDataset {
  std::vector<long long> sample_ids;
  std::vector<DenseTensor> party_features;  // each |U| x d_i
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t num_rows() const { return sample_ids.size(); }
  std::size_t num_parties() const { return party_features.size(); }
  std::size_t feature_width() const;
  void validate() const;
  DenseTensor global_features() const;  // column concat in party order
};

VerticalDataset subset(const VerticalDataset& data, std::span<const std::size_t> rows);
std::vector<std::size_t> all_rows(const VerticalDataset& data);

struct UnlearnRequest {
  std::vector<int> classes;  // m classes
  double fraction = 1.0;     // n in (0, 1]; n = 1 is label unlearning
  bool is_label_unlearning() const { return fraction >= 1.0; }
};

// Disjoint covering split of a dataset's row indices into D_u and D_r.
struct PartitionResult {
  std::vector<std::size_t> unlearn_rows;
  std::vector<std::size_t> remain_rows;
  void validate(std::size_t num_rows) const;
};

// Gaussian blobs, unit covariance, every pair of class centers exactly
// `separation` apart (requires classes <= feature_dim).
VerticalDataset gen_tabular(int classes, std::size_t per_class, std::size_t feature_dim,
                            double separation, std::uint64_t seed);

// Procedural oriented-bar images in [0,1], flattened row-major to features.
VerticalDataset gen_images(int classes, std::size_t per_class, std::size_t height,
                           std::size_t width, double noise_std, std::uint64_t seed);

struct CsvOptions {
  std::string label_column;
  char delimiter = ',';
  bool standardize = true;
};

// Header row required; numeric columns become features, other columns are
// one-hot encoded with lexicographic level order.
VerticalDataset load_csv(const std::string& path, const CsvOptions& options);

// Slice a single-table dataset into per-party matrices.
VerticalDataset vertical_partition(const VerticalDataset& table,
                                   const std::vector<PartySpec>& specs);

PartitionResult split_unlearn(const VerticalDataset& data, const UnlearnRequest& request,
                              std::uint64_t seed);

// Additive Gaussian noise on one party's columns only.
VerticalDataset noniid_perturb(const VerticalDataset& data, int party_index, double noise_std,
                               std::uint64_t seed);

struct TrainTestSplit {
  VerticalDataset train;
  VerticalDataset test;
};

// Seeded stratified split.
TrainTestSplit train_test_split(const VerticalDataset& data, double test_fraction,
                                std::uint64_t seed);

}  // namespace fedora
