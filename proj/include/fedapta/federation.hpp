// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/clustering.hpp"
#include "fedapta/data.hpp"
#include "fedapta/hdbscan.hpp"
#include "fedapta/nn.hpp"
#include "fedapta/pruning.hpp"
#include "fedapta/recovery.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fedapta {

enum class Mode {
  FedApta,     // prune, recover, cluster, per-task aggregate
  FedAvgAll,   // no pruning, one global model
  NoCluster,   // prune + recover, but aggregate everyone together
  OverlapOnly  // prune + cluster, average only positions every member kept
};

enum class RatioPolicy { Cycle, Explicit };
enum class PartitionKind { Lda, Iid };

std::string_view mode_name(Mode m) noexcept;
std::string_view policy_name(RatioPolicy p) noexcept;
std::string_view partition_name(PartitionKind p) noexcept;

/// Generator parameters shared by every ground-truth task.
struct TaskGenerator {
  int n_classes = 6;
  Index dim = 32;
  Index samples_per_class = 150;
  double separation = 6.0;

  friend bool operator==(const TaskGenerator&, const TaskGenerator&) = default;
};

struct FederationConfig {
  int rounds = 100;
  int num_tasks = 5;
  int devices_per_task = 10;
  TaskGenerator task;
  PartitionKind partition = PartitionKind::Lda;
  double alpha = 0.5;
  double test_fraction = 0.2;

  RatioPolicy ratio_policy = RatioPolicy::Cycle;
  std::vector<double> ratio_cycle = {0.0, 0.2, 0.4, 0.6, 0.8};
  std::map<Index, double> explicit_ratios;

  TrainConfig train;
  std::vector<Index> hidden = {64};
  std::vector<Index> conv_channels;  // empty: plain MLP
  Index conv_kernel = 3;
  double freeze_fraction = 0.0;

  double spread = 0.5;
  HdbscanParams hdbscan;
  int last_k_dense = 1;

  Mode mode = Mode::FedApta;
  std::uint64_t seed = 1;

  int num_devices() const noexcept { return num_tasks * devices_per_task; }
  int ground_truth_task(Index device) const noexcept { return static_cast<int>(device / devices_per_task); }
  std::vector<LayerSpec> model_specs() const;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

/// Pruning ratio per device: cycling assigns the list round-robin within each
/// ground-truth task group; explicit copies the configured map.
std::map<Index, double> assign_ratios(const FederationConfig& cfg, std::span<const Index> devices);

struct DeviceState {
  Index id = 0;
  int ground_truth_task = 0;
  Dataset data;
  double ratio = 0.0;
  std::int64_t received_id = 0;
  int task_label = -1;  // -1 until the first clustering
};

struct DeviceRoundMetrics {
  Index device = 0;
  int ground_truth_task = 0;
  int task_label = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double achieved_ratio = 0.0;
  Index candidate_params = 0;  // retained after pruning
  std::int64_t reference_id = 0;  // model recovery used
  std::vector<std::string> mask_hex;
};

struct ClusterMetrics {
  int label = 0;
  std::vector<Index> members;
  int matched_task = 0;  // majority ground-truth task of the members
  double test_accuracy = 0.0;
  std::int64_t model_id = 0;
};

struct RoundReport {
  int round = 0;
  std::vector<DeviceRoundMetrics> devices;
  ClusterAssignment assignment;
  std::vector<ClusterMetrics> clusters;
  std::vector<double> task_accuracy;  // per ground-truth task, over its devices' received models
  double ari = 0.0;

  double mean_task_accuracy() const;
};

/// One simulated federation. Each call to run_round advances by one round.
class Federation {
 public:
  explicit Federation(FederationConfig cfg);

  RoundReport run_round();

  int round() const noexcept { return round_; }
  const FederationConfig& config() const noexcept { return cfg_; }
  const std::vector<DeviceState>& devices() const noexcept { return devices_; }
  const Dataset& test_set(int task) const { return tests_.at(static_cast<std::size_t>(task)); }
  const ModelWeights& initial_model() const noexcept { return *models_.at(0); }
  const ModelWeights& received_model(Index device) const;

  /// Latest aggregated model per cluster label.
  const std::vector<std::pair<int, std::shared_ptr<const ModelWeights>>>& task_models() const noexcept {
    return task_models_;
  }
  /// Update deltas from the most recent round, by device.
  const std::vector<UpdateDelta>& last_deltas() const noexcept { return last_deltas_; }

 private:
  FederationConfig cfg_;
  std::vector<DeviceState> devices_;
  std::vector<Dataset> tests_;
  std::map<std::int64_t, std::shared_ptr<const ModelWeights>> models_;
  std::vector<std::pair<int, std::shared_ptr<const ModelWeights>>> task_models_;
  std::vector<UpdateDelta> last_deltas_;
  std::int64_t next_model_id_ = 1;
  int round_ = 0;
};

struct FederationResult {
  std::vector<RoundReport> reports;
  std::vector<std::pair<int, std::shared_ptr<const ModelWeights>>> task_models;
};

FederationResult run_federation(const FederationConfig& cfg);

}  // namespace fedapta
