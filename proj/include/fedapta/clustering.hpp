// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/nn.hpp"
#include "fedapta/similarity.hpp"

#include <span>
#include <vector>

namespace fedapta {

/// Flattened w_i - w_received over the last K dense layers (weights then
/// bias, layer by layer).
struct UpdateDelta {
  Index device = 0;
  Vector values;
};

/// Symmetric, zero diagonal, entries in [0, 2] for cosine distances.
using DistanceMatrix = Eigen::MatrixXd;

UpdateDelta compute_delta(Index device, const ModelWeights& trained, const ModelWeights& received, int last_k_dense);

/// Parameter count covered by compute_delta for this structure.
Index delta_length(const ModelWeights& model, int last_k_dense);

DistanceMatrix distance_matrix(std::span<const UpdateDelta> deltas);

/// Throws Input error unless `d` is square, symmetric, with non-negative
/// finite entries and a zero diagonal.
void check_distance_matrix(const DistanceMatrix& d);

/// Chance-corrected agreement of two labelings of the same points.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace fedapta
