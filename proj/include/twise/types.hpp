#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace twise {

/// Dense H x W image, row-major so that pixel (row, col) maps to row * W + col.
template <typename Scalar>
using DepthImage = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Depth in meters. A value <= 0 marks an invalid pixel; 0 is the canonical encoding.
using DepthMap = DepthImage<double>;
using Mask = DepthImage<bool>;
using LabelMap = DepthImage<int>;

template <typename Derived>
Mask valid_mask(const Eigen::ArrayBase<Derived>& depth) {
  return depth > typename Derived::Scalar(0);
}

template <typename A, typename B>
bool same_shape(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

template <typename A, typename B>
void require_same_shape(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b,
                        const char* what) {
  if (!same_shape(a, b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

/// Three-channel per-pixel output: c1 foreground depth, c2 background depth,
/// c3 fusion logit (sigma = sigmoid(c3)).
template <typename Scalar>
struct TwinSurfaceField {
  DepthImage<Scalar> c1;
  DepthImage<Scalar> c2;
  DepthImage<Scalar> c3;

  TwinSurfaceField() = default;
  TwinSurfaceField(Eigen::Index rows, Eigen::Index cols)
      : c1(DepthImage<Scalar>::Zero(rows, cols)),
        c2(DepthImage<Scalar>::Zero(rows, cols)),
        c3(DepthImage<Scalar>::Zero(rows, cols)) {}

  Eigen::Index rows() const { return c1.rows(); }
  Eigen::Index cols() const { return c1.cols(); }

  DepthImage<Scalar>& channel(int i) { return i == 0 ? c1 : (i == 1 ? c2 : c3); }
  const DepthImage<Scalar>& channel(int i) const { return i == 0 ? c1 : (i == 1 ? c2 : c3); }

  bool consistent() const {
    return same_shape(c1, c2) && same_shape(c1, c3);
  }
};

using Field = TwinSurfaceField<double>;

/// Pairwise (cascade) summation with a fixed split order, so the result only
/// depends on the input sequence and never on scheduling.
template <typename Scalar>
Scalar pairwise_sum(std::span<const Scalar> values) {
  constexpr std::size_t kLeaf = 16;
  if (values.size() <= kLeaf) {
    Scalar acc(0);
    for (const Scalar& v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

template <typename Scalar>
Scalar pairwise_sum(const std::vector<Scalar>& values) {
  return pairwise_sum(std::span<const Scalar>(values.data(), values.size()));
}

}  // namespace twise
