// SPDX-License-Identifier: Apache-2.0
#include "fedapta/hdbscan.hpp"

#include "fedapta/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <string>

namespace fedapta {

namespace {

// Distances below this are treated as identical points when converting to
// density levels (lambda = 1 / distance).
constexpr double kMinDistance = 1e-12;

// In the single-cluster fallback, a point is an outlier when it left the
// cluster at less than this fraction of the densest level reached.
constexpr double kOutlierLevel = 0.5;

double to_lambda(double distance) { return 1.0 / std::max(distance, kMinDistance); }

class DisjointSet {
 public:
  explicit DisjointSet(Index n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }
  Index find(Index x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }
  void link(Index child, Index root) { parent_[static_cast<std::size_t>(child)] = root; }

 private:
  std::vector<Index> parent_;
};

struct Merge {
  Index left = 0;
  Index right = 0;
  double distance = 0.0;
  Index size = 0;
};

// Single-linkage dendrogram: merge i creates node n + i.
std::vector<Merge> single_linkage(std::vector<MstEdge> mst, Index n) {
  std::stable_sort(mst.begin(), mst.end(), [](const MstEdge& a, const MstEdge& b) { return a.weight < b.weight; });
  DisjointSet sets(2 * n - 1);
  std::vector<Index> size(static_cast<std::size_t>(2 * n - 1), 1);
  std::vector<Merge> merges;
  for (const auto& e : mst) {
    const Index ra = sets.find(e.a), rb = sets.find(e.b);
    const Index node = n + static_cast<Index>(merges.size());
    const Index s = size[static_cast<std::size_t>(ra)] + size[static_cast<std::size_t>(rb)];
    merges.push_back({ra, rb, e.weight, s});
    size[static_cast<std::size_t>(node)] = s;
    sets.link(ra, node);
    sets.link(rb, node);
  }
  return merges;
}

}  // namespace

void HdbscanParams::validate() const {
  if (min_cluster_size < 2) fail(ErrorKind::Config, "min_cluster_size must be at least 2");
  if (min_samples < 1) fail(ErrorKind::Config, "min_samples must be at least 1");
}

std::vector<std::vector<Index>> ClusterAssignment::members() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(num_clusters));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  return out;
}

Vector core_distances(const DistanceMatrix& d, int min_samples) {
  const Index n = d.rows();
  Vector core(n);
  const auto k = static_cast<std::size_t>(std::min<Index>(min_samples - 1, n - 1));
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = d(i, j);
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    core(i) = row[k];
  }
  return core;
}

DistanceMatrix mutual_reachability(const DistanceMatrix& d, const Vector& core) {
  DistanceMatrix mr = d;
  for (Index i = 0; i < d.rows(); ++i)
    for (Index j = 0; j < d.cols(); ++j) mr(i, j) = i == j ? 0.0 : std::max({d(i, j), core(i), core(j)});
  return mr;
}

std::vector<MstEdge> prim_mst(const DistanceMatrix& weights) {
  const Index n = weights.rows();
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  std::vector<double> key(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<Index> from(static_cast<std::size_t>(n), 0);
  Index current = 0;
  in_tree[0] = 1;
  for (Index step = 1; step < n; ++step) {
    Index next = -1;
    for (Index v = 0; v < n; ++v) {
      const auto sv = static_cast<std::size_t>(v);
      if (in_tree[sv]) continue;
      if (weights(current, v) < key[sv]) {
        key[sv] = weights(current, v);
        from[sv] = current;
      }
      if (next < 0 || key[sv] < key[static_cast<std::size_t>(next)]) next = v;
    }
    const auto sn = static_cast<std::size_t>(next);
    in_tree[sn] = 1;
    edges.push_back({from[sn], next, key[sn]});
    current = next;
  }
  return edges;
}

ClusterTree condense(const std::vector<MstEdge>& mst, Index n, int min_cluster_size) {
  ClusterTree tree;
  tree.num_points = n;
  tree.root = n;
  if (n < 2) return tree;
  const auto merges = single_linkage(mst, n);
  const Index top = 2 * n - 2;
  auto node_size = [&](Index node) { return node < n ? Index{1} : merges[static_cast<std::size_t>(node - n)].size; };

  auto for_each_point = [&](Index node, auto&& fn) {
    std::vector<Index> stack{node};
    while (!stack.empty()) {
      const Index x = stack.back();
      stack.pop_back();
      if (x < n) {
        fn(x);
        continue;
      }
      const auto& m = merges[static_cast<std::size_t>(x - n)];
      stack.push_back(m.right);
      stack.push_back(m.left);
    }
  };

  std::vector<Index> label(static_cast<std::size_t>(top + 1), -1);
  label[static_cast<std::size_t>(top)] = n;
  Index next_label = n + 1;
  std::deque<Index> queue{top};
  while (!queue.empty()) {
    const Index node = queue.front();
    queue.pop_front();
    const auto& m = merges[static_cast<std::size_t>(node - n)];
    const Index parent = label[static_cast<std::size_t>(node)];
    const double lambda = to_lambda(m.distance);
    const bool left_big = node_size(m.left) >= min_cluster_size;
    const bool right_big = node_size(m.right) >= min_cluster_size;

    auto fall_out = [&](Index child) {
      for_each_point(child, [&](Index p) { tree.edges.push_back({parent, p, lambda, 1}); });
    };
    auto descend = [&](Index child, Index as) {
      label[static_cast<std::size_t>(child)] = as;
      if (child >= n) queue.push_back(child);
    };

    if (left_big && right_big) {
      for (Index child : {m.left, m.right}) {
        const Index id = next_label++;
        tree.edges.push_back({parent, id, lambda, node_size(child)});
        descend(child, id);
      }
    } else if (!left_big && !right_big) {
      fall_out(m.left);
      fall_out(m.right);
    } else {
      const Index big = left_big ? m.left : m.right;
      const Index small = left_big ? m.right : m.left;
      fall_out(small);
      descend(big, parent);
    }
  }
  return tree;
}

ClusterAssignment canonical_labels(std::span<const int> labels) {
  ClusterAssignment out;
  out.labels.resize(labels.size());
  out.from_noise.assign(labels.size(), 0);
  std::vector<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) { return s.first == labels[i]; });
    if (it == seen.end()) {
      seen.emplace_back(labels[i], out.num_clusters++);
      out.labels[i] = seen.back().second;
    } else {
      out.labels[i] = it->second;
    }
  }
  return out;
}

ClusterAssignment hdbscan(const DistanceMatrix& d, const HdbscanParams& params) {
  params.validate();
  check_distance_matrix(d);
  const Index n = d.rows();
  if (n < 2) fail(ErrorKind::Input, "hdbscan needs at least 2 points");

  const Vector core = core_distances(d, params.min_samples);
  const auto tree = condense(prim_mst(mutual_reachability(d, core)), n, params.min_cluster_size);

  Index max_cluster = tree.root;
  for (const auto& e : tree.edges) max_cluster = std::max(max_cluster, std::max(e.parent, e.child));
  const auto num_clusters = static_cast<std::size_t>(max_cluster - n + 1);
  auto slot = [&](Index cluster) { return static_cast<std::size_t>(cluster - n); };

  std::vector<double> birth(num_clusters, 0.0), stability(num_clusters, 0.0);
  std::vector<Index> parent_of(num_clusters, -1);
  std::vector<std::vector<Index>> children(num_clusters);
  std::vector<Index> point_parent(static_cast<std::size_t>(n), tree.root);
  std::vector<double> point_lambda(static_cast<std::size_t>(n), 0.0);
  for (const auto& e : tree.edges) {
    if (e.child >= n) {
      birth[slot(e.child)] = e.lambda;
      parent_of[slot(e.child)] = e.parent;
      children[slot(e.parent)].push_back(e.child);
    } else {
      point_parent[static_cast<std::size_t>(e.child)] = e.parent;
      point_lambda[static_cast<std::size_t>(e.child)] = e.lambda;
    }
  }
  for (const auto& e : tree.edges)
    stability[slot(e.parent)] += (e.lambda - birth[slot(e.parent)]) * static_cast<double>(e.size);

  // Excess-of-mass selection over non-root clusters, children before parents
  // (ids grow with depth).
  std::vector<char> selected(num_clusters, 0);
  std::vector<double> best(stability);
  for (Index c = max_cluster; c > tree.root; --c) {
    double subtree = 0.0;
    for (Index ch : children[slot(c)]) subtree += best[slot(ch)];
    if (!children[slot(c)].empty() && subtree > stability[slot(c)]) {
      best[slot(c)] = subtree;
    } else {
      selected[slot(c)] = 1;
      std::vector<Index> stack(children[slot(c)]);
      while (!stack.empty()) {
        const Index x = stack.back();
        stack.pop_back();
        selected[slot(x)] = 0;
        stack.insert(stack.end(), children[slot(x)].begin(), children[slot(x)].end());
      }
    }
  }
  double selected_mass = 0.0;
  for (Index ch : children[slot(tree.root)]) selected_mass += best[slot(ch)];

  std::vector<int> raw(static_cast<std::size_t>(n), -1);
  if (selected_mass > 0.0) {
    for (Index p = 0; p < n; ++p) {
      for (Index c = point_parent[static_cast<std::size_t>(p)]; c != tree.root && c >= 0; c = parent_of[slot(c)]) {
        if (selected[slot(c)]) {
          raw[static_cast<std::size_t>(p)] = static_cast<int>(c);
          break;
        }
      }
    }
  } else {
    // No split carries positive excess of mass: the whole set is one cluster,
    // minus points that detached far below its densest level.
    const double densest = *std::max_element(point_lambda.begin(), point_lambda.end());
    for (Index p = 0; p < n; ++p)
      if (point_lambda[static_cast<std::size_t>(p)] >= kOutlierLevel * densest) raw[static_cast<std::size_t>(p)] = static_cast<int>(tree.root);
  }

  // Noise points become their own singleton clusters.
  std::vector<char> noise(static_cast<std::size_t>(n), 0);
  int fresh = static_cast<int>(max_cluster) + 1;
  for (std::size_t p = 0; p < raw.size(); ++p)
    if (raw[p] < 0) {
      raw[p] = fresh++;
      noise[p] = 1;
    }
  auto result = canonical_labels(raw);
  result.from_noise = std::move(noise);
  return result;
}

}  // namespace fedapta
