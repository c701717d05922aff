// SPDX-License-Identifier: Apache-2.0
#include "fedapta/clustering.hpp"

#include "fedapta/error.hpp"

#include <cmath>
#include <map>
#include <string>

namespace fedapta {

std::string_view metric_name(Metric m) noexcept {
  switch (m) {
    case Metric::L1: return "l1";
    case Metric::L2: return "l2";
    case Metric::Inner: return "inner";
    case Metric::Cosine: return "cosine";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::L1, Metric::L2, Metric::Inner, Metric::Cosine})
    if (metric_name(m) == name) return m;
  fail(ErrorKind::Config, "unknown similarity metric '" + std::string(name) + "' (expected l1, l2, inner, cosine)");
}

namespace {

std::vector<std::size_t> last_dense_layers(const ModelWeights& model, int last_k_dense) {
  if (last_k_dense < 1) fail(ErrorKind::Config, "last_k_dense must be at least 1");
  std::vector<std::size_t> dense;
  for (std::size_t k = 0; k < model.specs.size(); ++k)
    if (model.specs[k].kind == LayerKind::Dense) dense.push_back(k);
  if (static_cast<int>(dense.size()) < last_k_dense)
    fail(ErrorKind::Config, "model has " + std::to_string(dense.size()) + " dense layers, last_k_dense asks for " +
                                std::to_string(last_k_dense));
  return {dense.end() - last_k_dense, dense.end()};
}

}  // namespace

Index delta_length(const ModelWeights& model, int last_k_dense) {
  Index n = 0;
  for (auto k : last_dense_layers(model, last_k_dense)) n += model.specs[k].param_count();
  return n;
}

UpdateDelta compute_delta(Index device, const ModelWeights& trained, const ModelWeights& received, int last_k_dense) {
  if (!trained.congruent(received)) fail(ErrorKind::Spec, "trained and received models differ in shape");
  const auto layers = last_dense_layers(trained, last_k_dense);
  UpdateDelta delta;
  delta.device = device;
  delta.values.resize(delta_length(trained, last_k_dense));
  Index at = 0;
  for (auto k : layers) {
    const auto& t = trained.layers[k];
    const auto& r = received.layers[k];
    delta.values.segment(at, t.weight.size()) = t.weight.flat() - r.weight.flat();
    at += t.weight.size();
    delta.values.segment(at, t.bias.size()) = t.bias.flat() - r.bias.flat();
    at += t.bias.size();
  }
  return delta;
}

DistanceMatrix distance_matrix(std::span<const UpdateDelta> deltas) {
  if (deltas.size() < 2) fail(ErrorKind::Input, "distance matrix needs at least 2 deltas");
  const auto n = static_cast<Index>(deltas.size());
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double v = cosine_distance(deltas[static_cast<std::size_t>(i)].values, deltas[static_cast<std::size_t>(j)].values);
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

void check_distance_matrix(const DistanceMatrix& d) {
  if (d.rows() != d.cols()) fail(ErrorKind::Input, "distance matrix must be square");
  for (Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) fail(ErrorKind::Input, "distance matrix diagonal must be zero");
    for (Index j = 0; j < d.cols(); ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) < 0.0) fail(ErrorKind::Input, "distance matrix has a negative or non-finite entry");
      if (d(i, j) != d(j, i)) fail(ErrorKind::Input, "distance matrix is not symmetric");
    }
  }
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) fail(ErrorKind::Input, "labelings differ in length");
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [_, c] : table) index += pairs(c);
  for (const auto& [_, c] : rows) sum_rows += pairs(c);
  for (const auto& [_, c] : cols) sum_cols += pairs(c);
  const double total = pairs(n);
  if (total == 0.0) return 1.0;
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  // Both labelings trivial (all-one-cluster or all-singletons) and identical.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace fedapta
