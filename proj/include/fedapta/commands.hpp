// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/federation.hpp"
#include "fedapta/similarity.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedapta {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::vector<double> ratios;         // sweep-prune
  std::vector<std::string> metrics;   // metric-study; empty = all four
};

/// Loads the config and applies the seed override.
FederationConfig load_config(const CommandOptions& opts);

int cmd_run(const CommandOptions& opts, std::ostream& log);
int cmd_sweep_prune(const CommandOptions& opts, std::ostream& log);
int cmd_metric_study(const CommandOptions& opts, std::ostream& log);
/// Prints the fully resolved config to `out`.
int cmd_validate_config(const CommandOptions& opts, std::ostream& out, std::ostream& log);

struct SweepRow {
  double ratio = 0.0;
  double accuracy = 0.0;          // final-round mean per-task accuracy
  double candidate_params = 0.0;  // final-round mean retained candidate params per device
};

/// One federation per ratio with every device pruned to that ratio.
std::vector<SweepRow> sweep_prune(const FederationConfig& cfg, const std::vector<double>& ratios);

struct MetricValue {
  Metric metric = Metric::Cosine;
  Index device = 0;
  double value = 0.0;  // normalized by device 0's self-similarity
};

struct MetricStudy {
  std::vector<MetricValue> values;
  std::vector<std::pair<Metric, double>> separation;
};

/// Runs one round and compares device 0's update with every other device's.
/// L1 and L2 distances enter as similarities 1 / (1 + d).
MetricStudy metric_study(const FederationConfig& cfg, const std::vector<Metric>& metrics);

std::vector<Metric> parse_metric_list(const std::vector<std::string>& names);

}  // namespace fedapta
