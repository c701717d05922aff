// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/federation.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedapta {

/// Parses the line-oriented `key = value` format:
///
///   # comment
///   [training]      learning_rate lr_decay weight_decay local_epochs batch_size
///                   hidden_layers conv_channels conv_kernel freeze_fraction
///   [federation]    rounds tasks devices_per_task n_classes dim samples_per_class
///                   separation partition alpha test_fraction ratio_policy ratios
///                   explicit_ratios mode seed
///   [pruning]       spread
///   [clustering]    min_cluster_size min_samples last_k_dense
///
/// Missing keys keep their defaults. Unknown or duplicate keys, malformed
/// values and out-of-range values raise ConfigError with key and line.
FederationConfig parse_config_text(std::string_view text);
FederationConfig parse_config(const std::filesystem::path& path);

/// Writes every key with its resolved value; parse_config_text(emit_config(c)) == c.
std::string emit_config(const FederationConfig& cfg);

/// Comma-separated numbers; an empty or blank string gives an empty list.
/// Errors are ConfigErrors attributed to `key`.
std::vector<double> parse_number_list(std::string_view text, const std::string& key);

/// 17 significant digits, as written to CSV files.
std::string format_double(double v);
/// Shortest text that parses back to the same double.
std::string format_shortest(double v);

}  // namespace fedapta
