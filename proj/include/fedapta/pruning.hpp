// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/nn.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedapta {

struct LayerProfile {
  Index layer = 0;        // position in the model
  Index params = 1;       // weights + biases
  double importance = 0;  // mean |weight|
  Index channels = 1;

  friend bool operator==(const LayerProfile&, const LayerProfile&) = default;
};

/// Per-layer pruning ratios for the candidate layers of one model.
struct RatioPlan {
  double target = 0.0;
  std::vector<Index> layers;     // model layer index, same order as ratios
  std::vector<double> ratios;    // in profile (model) order
  std::vector<std::size_t> sorted_order;  // profile positions by descending importance
  double spread = 0.0;
  double mu = 0.0;               // solved offset; ratio_k = clamp(mu + spread * (s_k - mean_s))
};

/// Channel-level keep mask. Layers that are not candidates are all ones.
struct PruneMask {
  std::vector<std::vector<std::uint8_t>> channels;  // per layer, 1 = keep
  double achieved_ratio = 0.0;  // pruned candidate params / candidate params

  Index pruned_channels(Index layer) const;
  bool all_ones() const;
  friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

std::vector<LayerProfile> layer_importance(const ModelWeights& model);

/// Canonical solution of the constrained allocation problem: ratios are
/// non-decreasing in the descending-importance order, lie in [0, 1], and
/// their parameter-weighted sum equals target * total parameters.
RatioPlan allocate_ratios(std::span<const LayerProfile> profiles, double target, double spread);

/// Budget residual |sum N_k rho_k - target sum N_k| tolerated by allocate_ratios.
double budget_tolerance(std::span<const LayerProfile> profiles);

/// Prunes round-half-up(ratio * channels) lowest-L1 channels per candidate layer.
PruneMask build_mask(const ModelWeights& model, const RatioPlan& plan);

/// All-ones mask shaped for `model`.
PruneMask full_mask(const ModelWeights& model);

/// Parameter-shaped 0/1 expansion of a channel mask.
ModelWeights expand_mask(const ModelWeights& model, const PruneMask& mask);

/// Elementwise w * M; masked entries become +0.
ModelWeights apply_mask(const ModelWeights& model, const PruneMask& mask);
void apply_mask_in_place(ModelWeights& model, const PruneMask& mask);

/// Unpruned parameter count in candidate layers.
Index retained_candidate_params(const ModelWeights& model, const PruneMask& mask);

/// Channel norms sum |w| over each weight row.
Vector channel_l1_norms(const LayerParams& layer);

/// Hex bitstring per layer, most significant bit = channel 0, zero-padded to
/// a whole nibble.
std::string mask_to_hex(std::span<const std::uint8_t> channels);
std::vector<std::uint8_t> mask_from_hex(const std::string& hex, Index channels);

}  // namespace fedapta
