// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstring>
#include <numeric>
#include <vector>

namespace fedapta {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrix = RowMatrixT<double>;
using Vector = VectorT<double>;

/// Dense n-d array stored row-major in a flat Eigen vector.
///
/// The first axis is the "row" axis: for layer weights it is the output
/// channel, so `rows()` gives one row per channel regardless of rank.
template <typename Scalar>
class BasicTensor {
 public:
  using Flat = VectorT<Scalar>;
  using RowMap = Eigen::Map<RowMatrixT<Scalar>>;
  using ConstRowMap = Eigen::Map<const RowMatrixT<Scalar>>;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    data_ = Flat::Zero(product(shape_));
  }
  BasicTensor(std::vector<Index> shape, Flat data) : shape_(std::move(shape)), data_(std::move(data)) {}

  const std::vector<Index>& shape() const noexcept { return shape_; }
  Index size() const noexcept { return data_.size(); }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }

  Flat& flat() noexcept { return data_; }
  const Flat& flat() const noexcept { return data_; }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }

  /// View as [shape[0], size / shape[0]].
  RowMap rows() { return RowMap(data_.data(), leading(), trailing()); }
  ConstRowMap rows() const { return ConstRowMap(data_.data(), leading(), trailing()); }

  Index leading() const noexcept { return shape_.empty() ? 1 : shape_.front(); }
  Index trailing() const noexcept { return leading() == 0 ? 0 : size() / leading(); }

  bool same_shape(const BasicTensor& other) const noexcept { return shape_ == other.shape_; }

  bool all_finite() const { return data_.allFinite(); }

  /// Exact comparison of shape and every bit of the payload.
  friend bool bitwise_equal(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ &&
           std::memcmp(a.data_.data(), b.data_.data(),
                       static_cast<std::size_t>(a.size()) * sizeof(Scalar)) == 0;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static Index product(const std::vector<Index>& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

 private:
  std::vector<Index> shape_;
  Flat data_;
};

using Tensor = BasicTensor<double>;

}  // namespace fedapta
