// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

#include "fedapta/hdbscan.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace fedapta;
using namespace fedapta::testing;

namespace {

DistanceMatrix uniform(int n, double v) {
  DistanceMatrix d = DistanceMatrix::Constant(n, n, v);
  d.diagonal().setZero();
  return d;
}

// Random block layout with every block at least `min_size` large, n <= 12.
std::vector<int> random_blocks(int min_size, std::mt19937_64& rng) {
  const int max_blocks = std::min(4, 12 / min_size);
  const int blocks = std::uniform_int_distribution<int>(2, max_blocks)(rng);
  std::vector<int> sizes(static_cast<std::size_t>(blocks), min_size);
  int spare = 12 - blocks * min_size;
  for (auto& s : sizes) {
    const int extra = std::uniform_int_distribution<int>(0, spare)(rng);
    s += extra;
    spare -= extra;
  }
  std::vector<int> of;
  for (int b = 0; b < blocks; ++b) of.insert(of.end(), static_cast<std::size_t>(sizes[static_cast<std::size_t>(b)]), b);
  std::shuffle(of.begin(), of.end(), rng);
  return of;
}

double total_weight(const std::vector<MstEdge>& edges) {
  double s = 0.0;
  for (const auto& e : edges) s += e.weight;
  return s;
}

}  // namespace

TEST_CASE("core distances count the point itself") {
  DistanceMatrix d(3, 3);
  d << 0, 1, 4, 1, 0, 2, 4, 2, 0;
  CHECK(core_distances(d, 1) == Vector::Zero(3));
  Vector two(3);
  two << 1, 1, 2;
  CHECK(core_distances(d, 2) == two);
  const auto mr = mutual_reachability(d, two);
  CHECK(mr(0, 1) == 1.0);
  CHECK(mr(0, 2) == 4.0);
  CHECK(mr(1, 2) == 2.0);
  CHECK(mr.diagonal().isZero());
}

TEST_CASE("hdbscan: two tight pairs") {
  DistanceMatrix d = uniform(4, 1.5);
  d(0, 1) = d(1, 0) = 0.01;
  d(2, 3) = d(3, 2) = 0.01;
  const auto a = hdbscan(d, {});
  CHECK(a.labels == std::vector<int>{0, 0, 1, 1});
  CHECK(a.num_clusters == 2);
}

TEST_CASE("hdbscan: equidistant points form one cluster") {
  for (int n : {3, 5, 9}) {
    const auto a = hdbscan(uniform(n, 0.7), {});
    CHECK(a.num_clusters == 1);
    CHECK(std::all_of(a.labels.begin(), a.labels.end(), [](int l) { return l == 0; }));
  }
}

TEST_CASE("hdbscan: two points are one cluster at any distance") {
  for (double v : {1e-9, 0.3, 2.0}) {
    const auto a = hdbscan(uniform(2, v), {});
    CHECK(a.labels == std::vector<int>{0, 0});
  }
}

TEST_CASE("hdbscan: far outlier becomes a singleton") {
  DistanceMatrix d = uniform(5, 0.01);
  for (int i = 0; i < 4; ++i) d(i, 4) = d(4, i) = 1.9;
  const auto a = hdbscan(d, {});
  CHECK(a.labels == std::vector<int>{0, 0, 0, 0, 1});
  CHECK(a.from_noise == std::vector<char>{0, 0, 0, 0, 1});

  std::vector<int> order{4, 0, 1, 2, 3};
  DistanceMatrix p(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) p(i, j) = d(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  CHECK(hdbscan(p, {}).labels == std::vector<int>{0, 1, 1, 1, 1});
}

TEST_CASE("hdbscan input checks") {
  DistanceMatrix d = uniform(3, 1.0);
  d(0, 1) = 2.0;
  CHECK(error_kind_of([&] { hdbscan(d, {}); }) == ErrorKind::Input);
  CHECK(error_kind_of([&] { hdbscan(uniform(1, 1.0), {}); }) == ErrorKind::Input);
  CHECK(error_kind_of([&] { hdbscan(uniform(3, 1.0), {1, 2}); }) == ErrorKind::Config);
  CHECK(error_kind_of([&] { hdbscan(uniform(3, 1.0), {2, 0}); }) == ErrorKind::Config);
}

TEST_CASE("Prim MST matches brute-force enumeration") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 7;
    const auto d = random_distances(n, rng);
    const auto edges = prim_mst(d);
    CHECK(edges.size() == static_cast<std::size_t>(n - 1));
    CHECK(total_weight(edges) == doctest::Approx(brute_force_mst_weight(d)).epsilon(1e-12));
  }
}

TEST_CASE("condensed tree accounts for every point once") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 12)(rng);
    const auto d = random_distances(n, rng);
    const auto tree = condense(prim_mst(d), n, 2);
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (const auto& e : tree.edges) {
      if (e.child < n) ++seen[static_cast<std::size_t>(e.child)];
      CHECK(e.lambda > 0.0);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST_CASE("separated blocks are recovered exactly") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    HdbscanParams params;
    params.min_cluster_size = 2 + trial % 2;
    const auto blocks = random_blocks(params.min_cluster_size, rng);
    const double within = std::uniform_real_distribution<double>(0.01, 0.2)(rng);
    const auto d = block_matrix(blocks, within, within * std::uniform_real_distribution<double>(1.5, 20.0)(rng), rng);
    const auto a = hdbscan(d, params);
    INFO("trial " << trial);
    CHECK(adjusted_rand_index(a.labels, blocks) == 1.0);
  }
}

TEST_CASE("hdbscan is permutation equivariant and scale invariant") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const auto blocks = random_blocks(2, rng);
    const auto n = static_cast<Index>(blocks.size());
    const auto d = block_matrix(blocks, 0.1, 0.6, rng);
    const auto base = hdbscan(d, {});

    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    DistanceMatrix p(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) p(i, j) = d(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    std::vector<int> expected(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) expected[static_cast<std::size_t>(i)] = base.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    CHECK(hdbscan(p, {}).labels == canonical_labels(expected).labels);

    const DistanceMatrix scaled = 3.0 * d;
    CHECK(hdbscan(scaled, {}).labels == base.labels);
  }
}

TEST_CASE("canonical labels follow the smallest member") {
  const std::vector<int> raw{7, 3, 7, 9, 3};
  const auto a = canonical_labels(raw);
  CHECK(a.labels == std::vector<int>{0, 1, 0, 2, 1});
  CHECK(a.num_clusters == 3);
  const auto m = a.members();
  CHECK(m[1] == std::vector<Index>{1, 4});
}
