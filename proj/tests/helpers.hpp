// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/data.hpp"
#include "fedapta/error.hpp"
#include "fedapta/nn.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace fedapta::testing {

// Two or more Gaussian blobs along the coordinate axes, `n_per_class` each.
inline Dataset axis_blobs(int classes, Index dim, Index n_per_class, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  d.num_classes = classes;
  d.features = RowMatrix::Zero(classes * n_per_class, dim);
  for (int c = 0; c < classes; ++c)
    for (Index i = 0; i < n_per_class; ++i) {
      const Index row = c * n_per_class + i;
      for (Index j = 0; j < dim; ++j) d.features(row, j) = noise(rng);
      d.features(row, c % dim) += (c < dim ? radius : -radius);
      d.labels.push_back(c);
    }
  return d;
}

inline RowMatrix random_batch(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline std::vector<int> random_labels(Index n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& y : out) y = pick(rng);
  return out;
}

// Relative discrepancy ||analytic - numeric|| / max(||analytic||, ||numeric||)
// between backprop and central-difference gradients over every parameter.
inline double max_fd_error(const ModelWeights& model, const RowMatrix& batch, const std::vector<int>& labels,
                           double h = 1e-6) {
  const auto analytic = loss_and_grad(model, batch, labels).grads;
  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  ModelWeights probe = model;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    for (int part = 0; part < 2; ++part) {
      auto& target = part == 0 ? probe.layers[k].weight.flat() : probe.layers[k].bias.flat();
      const auto& g = part == 0 ? analytic.layers[k].weight.flat() : analytic.layers[k].bias.flat();
      for (Index i = 0; i < target.size(); ++i) {
        const double saved = target(i);
        target(i) = saved + h;
        const double up = loss_and_grad(probe, batch, labels).loss;
        target(i) = saved - h;
        const double down = loss_and_grad(probe, batch, labels).loss;
        target(i) = saved;
        const double numeric = (up - down) / (2.0 * h);
        diff += (numeric - g(i)) * (numeric - g(i));
        norm_a += g(i) * g(i);
        norm_n += numeric * numeric;
      }
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-12});
}

// Symmetric matrix whose points split into `blocks` groups: within-group
// distances near `within`, cross-group distances at least `cross`.
inline Eigen::MatrixXd block_matrix(const std::vector<int>& block_of, double within, double cross,
                                    std::mt19937_64& rng) {
  const auto n = static_cast<Index>(block_of.size());
  std::uniform_real_distribution<double> jitter(0.85, 1.15), spread(1.0, 1.5);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const bool same = block_of[static_cast<std::size_t>(i)] == block_of[static_cast<std::size_t>(j)];
      d(i, j) = d(j, i) = same ? within * jitter(rng) : cross * spread(rng);
    }
  return d;
}

template <typename Fn>
ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Internal;
}

}  // namespace fedapta::testing
