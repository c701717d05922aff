// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace fedapta {

struct Dataset {
  RowMatrix features;  // [n_samples, dim]
  std::vector<int> labels;
  int num_classes = 0;
  int task_id = 0;

  Index size() const noexcept { return features.rows(); }
  Index dim() const noexcept { return features.cols(); }
  void validate() const;
};

/// Samples `indices` (in that order) out of `data`.
Dataset subset(const Dataset& data, std::span<const Index> indices);

struct PartitionPlan {
  std::vector<std::vector<Index>> assignments;  // device -> sample indices
  std::optional<double> alpha;                  // nullopt for i.i.d.
  std::uint64_t seed = 0;

  Index num_devices() const noexcept { return static_cast<Index>(assignments.size()); }
};

/// Gaussian class blobs (unit covariance) whose means sit on a sphere of
/// radius `separation`, rotated by a task-specific orthogonal matrix.
Dataset gen_task(int task_id, int n_classes, Index dim, Index n_per_class, double separation,
                 std::uint64_t seed);

/// Per-class Dirichlet(alpha) device shares with largest-remainder rounding.
PartitionPlan lda_partition(const Dataset& data, Index n_devices, double alpha, std::uint64_t seed);

/// Seeded shuffle then round-robin.
PartitionPlan iid_partition(const Dataset& data, Index n_devices, std::uint64_t seed);

/// Throws Input error unless the plan is an exact partition of [0, n_samples)
/// with no empty device.
void check_partition(const PartitionPlan& plan, Index n_samples);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Seeded shuffle; the first round(test_fraction * n) samples become the test set.
TrainTestSplit split_holdout(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Per-class label histogram of the given samples, normalized to sum 1.
Vector label_distribution(const Dataset& data, std::span<const Index> indices);

/// Mean total-variation distance between each device's label distribution and
/// the global one.
double mean_label_tv_distance(const Dataset& data, const PartitionPlan& plan);

/// Reads a big-endian IDX image/label pair (magic 0x00000803 / 0x00000801).
/// Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Same, over in-memory file contents.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

}  // namespace fedapta
