// SPDX-License-Identifier: Apache-2.0
#include "fedapta/data.hpp"

#include "fedapta/error.hpp"
#include "fedapta/seed.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

namespace fedapta {

void Dataset::validate() const {
  if (features.rows() < 1) fail(ErrorKind::Input, "dataset must contain at least one sample");
  if (static_cast<Index>(labels.size()) != features.rows())
    fail(ErrorKind::Input, "label count does not match sample count");
  if (num_classes < 1) fail(ErrorKind::Input, "num_classes must be positive");
  for (int y : labels)
    if (y < 0 || y >= num_classes) fail(ErrorKind::Input, "label " + std::to_string(y) + " out of range");
  if (!features.allFinite()) fail(ErrorKind::Input, "features must be finite");
}

Dataset subset(const Dataset& data, std::span<const Index> indices) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.task_id = data.task_id;
  out.features.resize(static_cast<Index>(indices.size()), data.dim());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= data.size()) fail(ErrorKind::Input, "sample index out of range");
    out.features.row(static_cast<Index>(i)) = data.features.row(indices[i]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

namespace {

RowMatrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
// signs of R's diagonal folded into Q.
Eigen::MatrixXd random_rotation(Index dim, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = gaussian_matrix(dim, dim, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

void shuffle(std::vector<Index>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

}  // namespace

Dataset gen_task(int task_id, int n_classes, Index dim, Index n_per_class, double separation, std::uint64_t seed) {
  if (n_classes < 2) fail(ErrorKind::Input, "gen_task needs at least 2 classes");
  if (dim < 2) fail(ErrorKind::Input, "gen_task needs dim >= 2");
  if (n_per_class < 1) fail(ErrorKind::Input, "gen_task needs n_per_class >= 1");
  if (!(separation >= 0.0)) fail(ErrorKind::Input, "separation must be non-negative");

  // Means come from the shared seed; the rotation and noise are per task.
  std::mt19937_64 mean_rng(derive_seed(seed, {0x6d65616e}));
  RowMatrix means = gaussian_matrix(n_classes, dim, mean_rng);
  for (Index c = 0; c < means.rows(); ++c) means.row(c) *= separation / means.row(c).norm();

  const auto tid = static_cast<std::uint64_t>(task_id);
  std::mt19937_64 rot_rng(derive_seed(seed, {0x726f74, tid}));
  const Eigen::MatrixXd rotation = random_rotation(dim, rot_rng);
  means = means * rotation.transpose();

  std::mt19937_64 noise_rng(derive_seed(seed, {0x6e6f6973, tid}));
  Dataset data;
  data.task_id = task_id;
  data.num_classes = n_classes;
  data.features = gaussian_matrix(n_classes * n_per_class, dim, noise_rng);
  data.labels.resize(static_cast<std::size_t>(n_classes * n_per_class));
  for (int c = 0; c < n_classes; ++c)
    for (Index i = 0; i < n_per_class; ++i) {
      const Index row = c * n_per_class + i;
      data.features.row(row) += means.row(c);
      data.labels[static_cast<std::size_t>(row)] = c;
    }
  return data;
}

namespace {

// Splits `total` items by `shares` (summing to 1) with largest-remainder
// rounding; ties go to the lower index.
std::vector<Index> largest_remainder(const std::vector<double>& shares, Index total) {
  std::vector<Index> counts(shares.size());
  std::vector<std::pair<double, std::size_t>> rema;
  Index assigned = 0;
  for (std::size_t d = 0; d < shares.size(); ++d) {
    const double exact = shares[d] * static_cast<double>(total);
    counts[d] = static_cast<Index>(std::floor(exact));
    assigned += counts[d];
    rema.emplace_back(exact - std::floor(exact), d);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[rema[i % rema.size()].second];
  return counts;
}

void repair_empty_devices(std::vector<std::vector<Index>>& assignments) {
  for (;;) {
    auto empty = std::find_if(assignments.begin(), assignments.end(), [](const auto& a) { return a.empty(); });
    if (empty == assignments.end()) return;
    auto largest = std::max_element(assignments.begin(), assignments.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (largest->size() < 2) fail(ErrorKind::Input, "not enough samples to give every device one");
    empty->push_back(largest->back());
    largest->pop_back();
  }
}

void require_devices(const Dataset& data, Index n_devices) {
  if (n_devices < 1) fail(ErrorKind::Input, "n_devices must be at least 1");
  if (n_devices > data.size())
    fail(ErrorKind::Input, "n_devices (" + std::to_string(n_devices) + ") exceeds sample count (" +
                               std::to_string(data.size()) + ")");
}

}  // namespace

PartitionPlan lda_partition(const Dataset& data, Index n_devices, double alpha, std::uint64_t seed) {
  require_devices(data, n_devices);
  if (!(alpha > 0.0)) fail(ErrorKind::Input, "alpha must be positive");

  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(data.num_classes));
  for (Index i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);

  PartitionPlan plan;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.assignments.resize(static_cast<std::size_t>(n_devices));
  std::mt19937_64 rng(derive_seed(seed, {0x6c6461}));
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (auto& members : by_class) {
    shuffle(members, rng);
    std::vector<double> shares(static_cast<std::size_t>(n_devices));
    double sum = 0.0;
    for (auto& s : shares) sum += (s = gamma(rng));
    if (!(sum > 0.0)) {
      // Every gamma draw underflowed (tiny alpha); fall back to one device.
      std::fill(shares.begin(), shares.end(), 0.0);
      shares[std::uniform_int_distribution<std::size_t>(0, shares.size() - 1)(rng)] = 1.0;
      sum = 1.0;
    }
    for (auto& s : shares) s /= sum;
    const auto counts = largest_remainder(shares, static_cast<Index>(members.size()));
    std::size_t next = 0;
    for (std::size_t d = 0; d < counts.size(); ++d)
      for (Index c = 0; c < counts[d]; ++c) plan.assignments[d].push_back(members[next++]);
  }
  repair_empty_devices(plan.assignments);
  return plan;
}

PartitionPlan iid_partition(const Dataset& data, Index n_devices, std::uint64_t seed) {
  require_devices(data, n_devices);
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(derive_seed(seed, {0x696964}));
  shuffle(order, rng);

  PartitionPlan plan;
  plan.seed = seed;
  plan.assignments.resize(static_cast<std::size_t>(n_devices));
  for (std::size_t i = 0; i < order.size(); ++i) plan.assignments[i % plan.assignments.size()].push_back(order[i]);
  return plan;
}

void check_partition(const PartitionPlan& plan, Index n_samples) {
  std::vector<char> seen(static_cast<std::size_t>(n_samples), 0);
  Index count = 0;
  for (std::size_t d = 0; d < plan.assignments.size(); ++d) {
    if (plan.assignments[d].empty()) fail(ErrorKind::Input, "device " + std::to_string(d) + " received no samples");
    for (Index i : plan.assignments[d]) {
      if (i < 0 || i >= n_samples) fail(ErrorKind::Input, "partition index out of range");
      if (seen[static_cast<std::size_t>(i)]++) fail(ErrorKind::Input, "sample " + std::to_string(i) + " assigned twice");
      ++count;
    }
  }
  if (count != n_samples) fail(ErrorKind::Input, "partition does not cover every sample");
}

TrainTestSplit split_holdout(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail(ErrorKind::Input, "test_fraction must be in [0, 1)");
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(derive_seed(seed, {0x686f6c64, static_cast<std::uint64_t>(data.task_id)}));
  shuffle(order, rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(order.size())));
  const std::span<const Index> all(order);
  return {subset(data, all.subspan(n_test)), subset(data, all.first(n_test))};
}

Vector label_distribution(const Dataset& data, std::span<const Index> indices) {
  Vector hist = Vector::Zero(data.num_classes);
  for (Index i : indices) hist(data.labels[static_cast<std::size_t>(i)]) += 1.0;
  if (!indices.empty()) hist /= static_cast<double>(indices.size());
  return hist;
}

double mean_label_tv_distance(const Dataset& data, const PartitionPlan& plan) {
  std::vector<Index> all(static_cast<std::size_t>(data.size()));
  std::iota(all.begin(), all.end(), Index{0});
  const Vector global = label_distribution(data, all);
  double total = 0.0;
  for (const auto& a : plan.assignments) total += 0.5 * (label_distribution(data, a) - global).cwiseAbs().sum();
  return total / static_cast<double>(plan.assignments.size());
}

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

  std::uint32_t u32be() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }
  std::span<const std::uint8_t> take(std::uint64_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t offset() const noexcept { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(bytes_.size(), std::string(what_) + ": truncated file, needed " + std::to_string(n) +
                                           " more bytes from offset " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  const char* what_;
  std::uint64_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Input, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  constexpr std::uint32_t kImageMagic = 0x00000803;
  constexpr std::uint32_t kLabelMagic = 0x00000801;

  ByteReader img(images, "images");
  if (const auto magic = img.u32be(); magic != kImageMagic)
    throw FormatError(0, "images: bad magic " + std::to_string(magic) + ", expected 0x00000803");
  const std::uint32_t n_images = img.u32be();
  const std::uint32_t rows = img.u32be();
  const std::uint32_t cols = img.u32be();

  ByteReader lab(labels, "labels");
  if (const auto magic = lab.u32be(); magic != kLabelMagic)
    throw FormatError(0, "labels: bad magic " + std::to_string(magic) + ", expected 0x00000801");
  const std::uint32_t n_labels = lab.u32be();
  if (n_labels != n_images)
    throw FormatError(4, "count mismatch: " + std::to_string(n_images) + " images vs " + std::to_string(n_labels) +
                             " labels");

  const std::uint64_t dim = std::uint64_t{rows} * cols;
  const auto pixels = img.take(std::uint64_t{n_images} * dim);
  const auto label_bytes = lab.take(n_labels);

  Dataset data;
  data.features.resize(n_images, static_cast<Index>(dim));
  for (std::uint64_t i = 0; i < n_images; ++i)
    for (std::uint64_t j = 0; j < dim; ++j)
      data.features(static_cast<Index>(i), static_cast<Index>(j)) = pixels[i * dim + j] / 255.0;
  data.labels.assign(label_bytes.begin(), label_bytes.end());
  data.num_classes = data.labels.empty() ? 1 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  return parse_idx(images, labels);
}

}  // namespace fedapta
