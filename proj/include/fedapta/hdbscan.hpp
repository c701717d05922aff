// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/clustering.hpp"

#include <vector>

namespace fedapta {

struct HdbscanParams {
  int min_cluster_size = 2;
  int min_samples = 2;

  void validate() const;
  friend bool operator==(const HdbscanParams&, const HdbscanParams&) = default;
};

struct ClusterAssignment {
  std::vector<int> labels;  // per device, contiguous 0..num_clusters-1
  int num_clusters = 0;
  std::vector<char> from_noise;  // 1 where the label is a promoted singleton

  std::vector<std::vector<Index>> members() const;
};

struct MstEdge {
  Index a = 0;
  Index b = 0;
  double weight = 0.0;
};

/// Distance to the min_samples-th nearest point, counting the point itself
/// (min_samples = 1 gives 0).
Vector core_distances(const DistanceMatrix& d, int min_samples);

/// max(d(a, b), core(a), core(b)), zero diagonal.
DistanceMatrix mutual_reachability(const DistanceMatrix& d, const Vector& core);

/// Dense O(n^2) Prim. Edges are returned in the order vertices join the tree.
std::vector<MstEdge> prim_mst(const DistanceMatrix& weights);

/// Row of the condensed tree: `child` is a point (< n) or a cluster id (>= n).
struct CondensedEdge {
  Index parent = 0;
  Index child = 0;
  double lambda = 0.0;
  Index size = 1;
};

struct ClusterTree {
  Index num_points = 0;
  Index root = 0;
  std::vector<CondensedEdge> edges;
};

ClusterTree condense(const std::vector<MstEdge>& mst, Index num_points, int min_cluster_size);

/// HDBSCAN* over a precomputed distance matrix with excess-of-mass cluster
/// selection. Noise points become singleton labels; labels are numbered in
/// order of each cluster's smallest member.
ClusterAssignment hdbscan(const DistanceMatrix& d, const HdbscanParams& params);

/// Relabels to 0..k-1 in order of first appearance.
ClusterAssignment canonical_labels(std::span<const int> labels);

}  // namespace fedapta
