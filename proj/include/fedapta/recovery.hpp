// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/nn.hpp"
#include "fedapta/pruning.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedapta {

/// What a device sends back after local training.
struct Upload {
  Index device = 0;
  ModelWeights model;  // trained, still zero wherever the mask is 0
  PruneMask mask;
  Index data_size = 1;
  std::int64_t reference_id = 0;  // id of the model the device started from
};

/// Throws Integrity error unless every masked-out parameter of the upload is 0.
void check_upload(const Upload& upload);

/// Fills the upload's masked-out positions from `reference`; masked-in
/// positions are taken from the upload unchanged.
ModelWeights recover(const Upload& upload, const ModelWeights& reference);

struct Contribution {
  Index device = 0;
  const ModelWeights* model = nullptr;
  Index data_size = 1;
};

/// Dataset-size weighted average, accumulated in ascending device order.
///
/// Computed as w_first + sum_i (|D_i| / |D|) (w_i - w_first) and clamped to the
/// members' elementwise range, so identical members reproduce their model
/// bitwise and every output stays a convex combination of the inputs.
ModelWeights aggregate(std::vector<Contribution> members);

/// Aggregation that only averages positions kept by every member; all other
/// positions take the size-weighted average of the members' reference models.
/// Used for the overlap-only ablation.
ModelWeights aggregate_overlap(std::span<const Upload> uploads, std::span<const ModelWeights* const> references);

}  // namespace fedapta
