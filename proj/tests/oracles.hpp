// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/clustering.hpp"
#include "fedapta/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace fedapta::testing {

struct AllocationInstance {
  std::vector<LayerProfile> profiles;
  double target = 0.0;
  double spread = 0.0;
};

// n in [2, 12] layers, N_k in [10, 1e5], I_k uniform in [0, 1] with
// occasional ties, target and spread uniform in [0, 1].
inline AllocationInstance random_allocation(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> layers(2, 12);
  std::uniform_int_distribution<Index> params(10, 100000);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AllocationInstance inst;
  const int n = layers(rng);
  for (int k = 0; k < n; ++k) {
    LayerProfile p;
    p.layer = k;
    p.params = params(rng);
    p.channels = std::max<Index>(1, p.params / 10);
    p.importance = (k > 0 && unit(rng) < 0.1) ? inst.profiles.back().importance : unit(rng);
    inst.profiles.push_back(p);
  }
  inst.target = unit(rng);
  inst.spread = unit(rng);
  if (unit(rng) < 0.05) inst.target = unit(rng) < 0.5 ? 0.0 : 1.0;
  return inst;
}

// Checks the three constraint groups straight from the raw inputs. Returns an
// empty string when the plan is feasible, otherwise the first violation.
inline std::string check_allocation(const AllocationInstance& inst, const std::vector<double>& ratios) {
  const auto& p = inst.profiles;
  if (ratios.size() != p.size()) return "ratio count";
  long double total = 0, spent = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(ratios[k] >= 0.0 && ratios[k] <= 1.0)) return "bounds at layer " + std::to_string(k);
    total += p[k].params;
    spent += static_cast<long double>(p[k].params) * ratios[k];
  }
  if (std::abs(static_cast<double>(spent - inst.target * total)) > 1e-9 * static_cast<double>(total))
    return "budget";
  for (std::size_t a = 0; a < p.size(); ++a)
    for (std::size_t b = 0; b < p.size(); ++b)
      if (p[a].importance > p[b].importance && ratios[a] > ratios[b])
        return "order between layers " + std::to_string(a) + " and " + std::to_string(b);
  return {};
}

// Minimum spanning-tree weight by enumerating every labelled tree through its
// Pruefer sequence (n^(n-2) trees).
inline double brute_force_mst_weight(const DistanceMatrix& w) {
  const auto n = static_cast<int>(w.rows());
  if (n < 2) return 0.0;
  if (n == 2) return w(0, 1);
  std::vector<int> seq(static_cast<std::size_t>(n - 2), 0);
  double best = INFINITY;
  while (true) {
    std::vector<int> degree(static_cast<std::size_t>(n), 1);
    for (int v : seq) ++degree[static_cast<std::size_t>(v)];
    double total = 0.0;
    for (int v : seq) {
      int leaf = 0;
      while (degree[static_cast<std::size_t>(leaf)] != 1) ++leaf;
      total += w(leaf, v);
      --degree[static_cast<std::size_t>(leaf)];
      --degree[static_cast<std::size_t>(v)];
    }
    int u = -1;
    for (int v = 0; v < n; ++v)
      if (degree[static_cast<std::size_t>(v)] == 1) {
        if (u < 0) u = v;
        else total += w(u, v);
      }
    best = std::min(best, total);

    std::size_t pos = 0;
    while (pos < seq.size() && ++seq[pos] == n) seq[pos++] = 0;
    if (pos == seq.size()) break;
  }
  return best;
}

inline DistanceMatrix random_distances(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = u(rng);
  return d;
}

}  // namespace fedapta::testing
