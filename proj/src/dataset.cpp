#include "fedora/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "fedora/errors.hpp"

namespace fedora {

void validate_party_specs(const std::vector<PartySpec>& specs, std::size_t total_width) {
  if (specs.empty()) throw ValidationError("party specs: empty");
  std::vector<char> covered(total_width, 0);
  int active = 0;
  for (const PartySpec& s : specs) {
    if (s.role == PartyRole::kActive) ++active;
    if (s.col_begin >= s.col_end || s.col_end > total_width) {
      throw ValidationError("party " + std::to_string(s.party_id) + ": slice [" +
                            std::to_string(s.col_begin) + ", " + std::to_string(s.col_end) +
                            ") invalid for width " + std::to_string(total_width));
    }
    for (std::size_t c = s.col_begin; c < s.col_end; ++c) {
      if (covered[c]) {
        throw ValidationError("party slices overlap at column " + std::to_string(c));
      }
      covered[c] = 1;
    }
  }
  for (std::size_t c = 0; c < total_width; ++c) {
    if (!covered[c]) throw ValidationError("party slices leave column " + std::to_string(c) + " uncovered");
  }
  if (active != 1) {
    throw ValidationError("expected exactly one active party, got " + std::to_string(active));
  }
}

std::size_t VerticalDataset::feature_width() const {
  std::size_t w = 0;
  for (const DenseTensor& m : party_features) w += m.cols();
  return w;
}

void VerticalDataset::validate() const {
  const std::size_t n = sample_ids.size();
  if (party_features.empty()) throw ValidationError("dataset: no parties");
  for (std::size_t p = 0; p < party_features.size(); ++p) {
    if (party_features[p].ndim() != 2 || party_features[p].rows() != n) {
      throw ValidationError("dataset: party " + std::to_string(p) + " rows do not match id count");
    }
  }
  if (labels.size() != n) throw ValidationError("dataset: label count does not match rows");
  if (num_classes < 2) throw ValidationError("dataset: need at least 2 classes");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ValidationError("dataset: label " + std::to_string(labels[i]) + " out of range at row " +
                            std::to_string(i));
    }
  }
}

DenseTensor VerticalDataset::global_features() const {
  std::vector<const DenseTensor*> parts;
  parts.reserve(party_features.size());
  for (const DenseTensor& m : party_features) parts.push_back(&m);
  return hconcat(parts);
}

VerticalDataset subset(const VerticalDataset& data, std::span<const std::size_t> rows) {
  VerticalDataset out;
  out.num_classes = data.num_classes;
  out.sample_ids.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= data.num_rows()) {
      throw ValidationError("subset: row " + std::to_string(r) + " out of " +
                            std::to_string(data.num_rows()));
    }
    out.sample_ids.push_back(data.sample_ids[r]);
    out.labels.push_back(data.labels[r]);
  }
  for (const DenseTensor& m : data.party_features) {
    DenseTensor sel({rows.size(), m.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) sel(i, j) = m(rows[i], j);
    }
    out.party_features.push_back(std::move(sel));
  }
  return out;
}

std::vector<std::size_t> all_rows(const VerticalDataset& data) {
  std::vector<std::size_t> rows(data.num_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void PartitionResult::validate(std::size_t num_rows) const {
  std::vector<char> seen(num_rows, 0);
  auto mark = [&](const std::vector<std::size_t>& rows, const char* name) {
    for (std::size_t r : rows) {
      if (r >= num_rows) {
        throw ValidationError(std::string(name) + ": row " + std::to_string(r) + " out of range");
      }
      if (seen[r]) {
        throw ValidationError("partition: row " + std::to_string(r) + " appears twice");
      }
      seen[r] = 1;
    }
  };
  mark(unlearn_rows, "unlearn rows");
  mark(remain_rows, "remain rows");
  for (std::size_t r = 0; r < num_rows; ++r) {
    if (!seen[r]) throw ValidationError("partition: row " + std::to_string(r) + " unassigned");
  }
}

VerticalDataset gen_tabular(int classes, std::size_t per_class, std::size_t feature_dim,
                            double separation, std::uint64_t seed) {
  if (classes < 2) throw ValidationError("gen_tabular: need at least 2 classes");
  if (feature_dim < 2) throw ValidationError("gen_tabular: need at least 2 features");
  if (per_class == 0) throw ValidationError("gen_tabular: per_class must be positive");
  if (static_cast<std::size_t>(classes) > feature_dim) {
    throw ValidationError("gen_tabular: class count exceeds feature dim (center construction)");
  }

  const std::size_t n = static_cast<std::size_t>(classes) * per_class;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double scale = separation / std::sqrt(2.0);

  DenseTensor features({n, feature_dim});
  std::vector<int> labels(n);
  for (int c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      const std::size_t row = static_cast<std::size_t>(c) * per_class + s;
      labels[row] = c;
      for (std::size_t j = 0; j < feature_dim; ++j) {
        features(row, j) = unit(rng) + (j == static_cast<std::size_t>(c) ? scale : 0.0);
      }
    }
  }

  // Shuffle rows so mini-batches mix classes.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  VerticalDataset out;
  out.num_classes = classes;
  out.sample_ids.resize(n);
  out.labels.resize(n);
  DenseTensor shuffled({n, feature_dim});
  for (std::size_t i = 0; i < n; ++i) {
    out.sample_ids[i] = static_cast<long long>(i);
    out.labels[i] = labels[order[i]];
    for (std::size_t j = 0; j < feature_dim; ++j) shuffled(i, j) = features(order[i], j);
  }
  out.party_features.push_back(std::move(shuffled));
  return out;
}

VerticalDataset gen_images(int classes, std::size_t per_class, std::size_t height,
                           std::size_t width, double noise_std, std::uint64_t seed) {
  if (classes < 2) throw ValidationError("gen_images: need at least 2 classes");
  if (height < 8 || width < 8) throw ValidationError("gen_images: grid must be at least 8x8");
  if (per_class == 0) throw ValidationError("gen_images: per_class must be positive");
  if (noise_std < 0.0) throw ValidationError("gen_images: noise_std must be >= 0");

  const std::size_t n = static_cast<std::size_t>(classes) * per_class;
  const std::size_t d = height * width;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  // Per-class template: a bright bar through the image center at a
  // class-specific angle over a dim background.
  std::vector<DenseTensor> templates;
  templates.reserve(static_cast<std::size_t>(classes));
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  for (int c = 0; c < classes; ++c) {
    DenseTensor t({height, width});
    const double angle = M_PI * static_cast<double>(c) / static_cast<double>(classes);
    const double nx = -std::sin(angle), ny = std::cos(angle);  // bar normal
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double dist = std::fabs((static_cast<double>(i) - cy) * ny +
                                      (static_cast<double>(j) - cx) * nx);
        t(i, j) = dist <= 1.2 ? 0.85 : 0.1;
      }
    }
    templates.push_back(std::move(t));
  }

  DenseTensor features({n, d});
  std::vector<int> labels(n);
  for (int c = 0; c < classes; ++c) {
    const DenseTensor& t = templates[static_cast<std::size_t>(c)];
    for (std::size_t s = 0; s < per_class; ++s) {
      const std::size_t row = static_cast<std::size_t>(c) * per_class + s;
      labels[row] = c;
      for (std::size_t k = 0; k < d; ++k) {
        double v = t[k];
        if (noise_std > 0.0) v += noise_std * noise(rng);
        features(row, k) = std::clamp(v, 0.0, 1.0);
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  VerticalDataset out;
  out.num_classes = classes;
  out.sample_ids.resize(n);
  out.labels.resize(n);
  DenseTensor shuffled({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    out.sample_ids[i] = static_cast<long long>(i);
    out.labels[i] = labels[order[i]];
    for (std::size_t k = 0; k < d; ++k) shuffled(i, k) = features(order[i], k);
  }
  out.party_features.push_back(std::move(shuffled));
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(cell);
  if (!line.empty() && line.back() == delim) cells.push_back("");
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

VerticalDataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IngestionError("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw IngestionError("load_csv: empty file " + path);
  const std::vector<std::string> header = split_line(line, options.delimiter);
  std::vector<std::string> names;
  names.reserve(header.size());
  for (const std::string& h : header) names.push_back(trim(h));

  std::ptrdiff_t label_col = -1;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == options.label_column) label_col = static_cast<std::ptrdiff_t>(i);
  }
  if (label_col < 0) {
    throw ValidationError("load_csv: label column '" + options.label_column + "' not found");
  }

  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_line(line, options.delimiter);
    if (cells.size() != names.size()) {
      throw IngestionError("load_csv: row " + std::to_string(line_no) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(names.size()));
    }
    for (std::string& c : cells) c = trim(c);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw IngestionError("load_csv: no data rows in " + path);

  const std::size_t n = rows.size();
  const std::size_t n_cols = names.size();

  // Column kinds: numeric if every cell parses as a double.
  std::vector<bool> numeric(n_cols, true);
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (static_cast<std::ptrdiff_t>(c) == label_col) continue;
    for (std::size_t r = 0; r < n; ++r) {
      double v;
      if (rows[r][c].empty()) {
        throw IngestionError("load_csv: empty cell at row " + std::to_string(r + 2) +
                             ", column '" + names[c] + "'");
      }
      if (!parse_double(rows[r][c], v)) {
        numeric[c] = false;
        break;
      }
    }
  }

  // Categorical levels, lexicographic.
  std::vector<std::vector<std::string>> levels(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (static_cast<std::ptrdiff_t>(c) == label_col || numeric[c]) continue;
    std::set<std::string> uniq;
    for (std::size_t r = 0; r < n; ++r) uniq.insert(rows[r][c]);
    levels[c].assign(uniq.begin(), uniq.end());
  }

  std::size_t width = 0;
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (static_cast<std::ptrdiff_t>(c) == label_col) continue;
    width += numeric[c] ? 1 : levels[c].size();
  }
  if (width == 0) throw ValidationError("load_csv: no feature columns");

  // Label mapping: numeric order when all labels parse, else lexicographic.
  std::set<std::string> label_set;
  for (std::size_t r = 0; r < n; ++r) label_set.insert(rows[r][static_cast<std::size_t>(label_col)]);
  std::vector<std::string> label_levels(label_set.begin(), label_set.end());
  {
    bool all_num = true;
    std::vector<std::pair<double, std::string>> nums;
    for (const std::string& s : label_levels) {
      double v;
      if (!parse_double(s, v)) {
        all_num = false;
        break;
      }
      nums.emplace_back(v, s);
    }
    if (all_num) {
      std::sort(nums.begin(), nums.end());
      label_levels.clear();
      for (auto& [v, s] : nums) label_levels.push_back(s);
    }
  }
  std::unordered_map<std::string, int> label_index;
  for (std::size_t i = 0; i < label_levels.size(); ++i) {
    label_index[label_levels[i]] = static_cast<int>(i);
  }
  if (label_levels.size() < 2) throw ValidationError("load_csv: fewer than 2 label classes");

  DenseTensor features({n, width});
  std::vector<int> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (static_cast<std::ptrdiff_t>(c) == label_col) continue;
      if (numeric[c]) {
        double v;
        if (!parse_double(rows[r][c], v) || !std::isfinite(v)) {
          throw IngestionError("load_csv: unparseable cell at row " + std::to_string(r + 2) +
                               ", column '" + names[c] + "'");
        }
        features(r, out_c++) = v;
      } else {
        const auto it = std::lower_bound(levels[c].begin(), levels[c].end(), rows[r][c]);
        const std::size_t idx = static_cast<std::size_t>(it - levels[c].begin());
        features(r, out_c + idx) = 1.0;
        out_c += levels[c].size();
      }
    }
    labels[r] = label_index.at(rows[r][static_cast<std::size_t>(label_col)]);
  }

  if (options.standardize) {
    for (std::size_t c = 0; c < width; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += features(r, c);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double d = features(r, c) - mean;
        var += d * d;
      }
      var /= static_cast<double>(n);
      const double sd = std::sqrt(var);
      for (std::size_t r = 0; r < n; ++r) {
        features(r, c) = sd > 0.0 ? (features(r, c) - mean) / sd : 0.0;
      }
    }
  }

  VerticalDataset out;
  out.num_classes = static_cast<int>(label_levels.size());
  out.sample_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.sample_ids[i] = static_cast<long long>(i);
  out.labels = std::move(labels);
  out.party_features.push_back(std::move(features));
  return out;
}

VerticalDataset vertical_partition(const VerticalDataset& table,
                                   const std::vector<PartySpec>& specs) {
  table.validate();
  const DenseTensor global = table.global_features();
  validate_party_specs(specs, global.cols());

  VerticalDataset out;
  out.sample_ids = table.sample_ids;
  out.labels = table.labels;
  out.num_classes = table.num_classes;
  for (const PartySpec& s : specs) {
    out.party_features.push_back(hslice(global, s.col_begin, s.col_end));
  }
  return out;
}

PartitionResult split_unlearn(const VerticalDataset& data, const UnlearnRequest& request,
                              std::uint64_t seed) {
  if (request.classes.empty()) throw ValidationError("split_unlearn: no classes requested");
  if (request.fraction <= 0.0 || request.fraction > 1.0) {
    throw ValidationError("split_unlearn: fraction must be in (0, 1]");
  }
  std::set<int> wanted(request.classes.begin(), request.classes.end());
  if (wanted.size() != request.classes.size()) {
    throw ValidationError("split_unlearn: duplicate classes in request");
  }

  std::map<int, std::vector<std::size_t>> per_class;
  for (std::size_t r = 0; r < data.num_rows(); ++r) per_class[data.labels[r]].push_back(r);
  for (int c : wanted) {
    if (!per_class.count(c)) {
      throw ValidationError("split_unlearn: class " + std::to_string(c) + " absent from dataset");
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<char> is_unlearn(data.num_rows(), 0);
  for (int c : request.classes) {
    std::vector<std::size_t>& rows = per_class[c];
    std::size_t take = rows.size();
    if (request.fraction < 1.0) {
      take = static_cast<std::size_t>(std::floor(request.fraction * static_cast<double>(rows.size())));
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t i = 0; i < take; ++i) is_unlearn[rows[i]] = 1;
  }

  PartitionResult res;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    (is_unlearn[r] ? res.unlearn_rows : res.remain_rows).push_back(r);
  }
  if (res.unlearn_rows.empty()) throw ValidationError("split_unlearn: empty unlearning set");
  if (res.remain_rows.empty()) {
    throw ValidationError("split_unlearn: nothing to retain (all rows selected for unlearning)");
  }
  return res;
}

VerticalDataset noniid_perturb(const VerticalDataset& data, int party_index, double noise_std,
                               std::uint64_t seed) {
  if (party_index < 0 || static_cast<std::size_t>(party_index) >= data.num_parties()) {
    throw ValidationError("noniid_perturb: party " + std::to_string(party_index) + " out of " +
                          std::to_string(data.num_parties()));
  }
  if (noise_std < 0.0) throw ValidationError("noniid_perturb: noise_std must be >= 0");
  VerticalDataset out = data;
  if (noise_std == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std);
  for (double& v : out.party_features[static_cast<std::size_t>(party_index)].values()) {
    v += noise(rng);
  }
  return out;
}

TrainTestSplit train_test_split(const VerticalDataset& data, double test_fraction,
                                std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw ValidationError("train_test_split: test_fraction must be in [0, 1)");
  }
  std::map<int, std::vector<std::size_t>> per_class;
  for (std::size_t r = 0; r < data.num_rows(); ++r) per_class[data.labels[r]].push_back(r);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_rows, test_rows;
  for (auto& [c, rows] : per_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const std::size_t n_test =
        static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(rows.size())));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_test ? test_rows : train_rows).push_back(rows[i]);
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  TrainTestSplit out{subset(data, train_rows), subset(data, test_rows)};
  return out;
}

}  // namespace fedora
