// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedapta/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string_view>

namespace fedapta {

enum class Metric { L1, L2, Inner, Cosine };

std::string_view metric_name(Metric m) noexcept;
Metric parse_metric(std::string_view name);

namespace detail {
template <typename A, typename B>
void require_same_length(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) fail(ErrorKind::Spec, "vectors differ in length");
}
}  // namespace detail

/// Norms below this count as zero vectors.
inline constexpr double kZeroNorm = 1e-12;

/// 1 - cos(a, b), in [0, 2]. A (near) zero vector is at distance 1 from
/// everything.
template <typename A, typename B>
typename A::Scalar cosine_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  detail::require_same_length(a, b);
  const Scalar na = a.norm(), nb = b.norm();
  if (na < kZeroNorm || nb < kZeroNorm) return Scalar(1);
  const Scalar cos = std::clamp<Scalar>(a.dot(b) / (na * nb), Scalar(-1), Scalar(1));
  return Scalar(1) - cos;
}

/// Raw metric value: l1/l2 are distances, inner/cosine are similarities.
template <typename A, typename B>
typename A::Scalar similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, Metric metric) {
  using Scalar = typename A::Scalar;
  detail::require_same_length(a, b);
  switch (metric) {
    case Metric::L1: return (a - b).template lpNorm<1>();
    case Metric::L2: return (a - b).norm();
    case Metric::Inner: return a.dot(b);
    case Metric::Cosine: return Scalar(1) - cosine_distance(a, b);
  }
  return Scalar(0);
}

constexpr bool is_distance_metric(Metric m) noexcept { return m == Metric::L1 || m == Metric::L2; }

}  // namespace fedapta
