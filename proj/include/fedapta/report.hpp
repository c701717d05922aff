// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/federation.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fedapta {

/// Closed set of metric names written to rounds.csv.
///
///   per device (device_id >= 0, task_label = cluster label):
///     loss, train_accuracy, achieved_ratio, candidate_params, reference_model_id
///   per cluster (device_id = -1, task_label = cluster label):
///     cluster_test_accuracy
///   per ground-truth task (device_id = -1, task_label = task index):
///     task_accuracy
///   per round (device_id = -1, task_label = -1):
///     ari, num_clusters
inline constexpr std::array<std::string_view, 9> kMetricNames = {
    "loss",          "train_accuracy", "achieved_ratio", "candidate_params", "reference_model_id",
    "cluster_test_accuracy", "task_accuracy", "ari", "num_clusters"};

bool is_metric_name(std::string_view name) noexcept;

struct MetricRow {
  std::string run_id;
  int round = 0;
  Index device_id = -1;
  int task_label = -1;
  std::string metric;
  double value = 0.0;
};

inline constexpr std::string_view kRoundsHeader = "run_id,round,device_id,task_label,metric,value";
inline constexpr std::string_view kClustersHeader = "round,device_id,task_label";

std::vector<MetricRow> rows_from_report(const RoundReport& report, const std::string& run_id);

void write_rounds_header(std::ostream& out);
void write_rounds_rows(std::ostream& out, const std::vector<MetricRow>& rows);
void write_clusters_header(std::ostream& out);
void write_clusters_rows(std::ostream& out, const RoundReport& report);

/// Flat binary model file, all integers and floats little-endian:
///   "FAPT" | u32 version (1) | u32 layer count
///   per layer: u32 kind, in_channels, out_channels, kernel, in_height, in_width,
///              activation, flags (bit 0 trainable, bit 1 candidate)
///   per layer: f64 weights (row-major), f64 biases
inline constexpr std::uint32_t kModelFileVersion = 1;

std::string encode_model(const ModelWeights& model);
ModelWeights decode_model(std::string_view bytes);
void write_model(const std::filesystem::path& path, const ModelWeights& model);
ModelWeights read_model(const std::filesystem::path& path);

}  // namespace fedapta
