#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace icleval::stats {

// Population (divisor = n) statistics over Eigen expressions.

template <typename Derived>
typename Derived::Scalar mean(const Eigen::DenseBase<Derived>& x) {
  return x.size() == 0 ? typename Derived::Scalar(0) : x.mean();
}

template <typename Derived>
typename Derived::Scalar population_std(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0 || x.maxCoeff() == x.minCoeff()) return Scalar(0);
  const Scalar m = x.mean();
  return std::sqrt((x.derived().array() - m).square().sum() / static_cast<Scalar>(x.size()));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> colwise_population_std(
    const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const auto centered = (x.rowwise() - x.colwise().mean()).eval();
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> out =
      (centered.array().square().colwise().sum() / static_cast<Scalar>(x.rows())).sqrt().matrix();
  // Constant columns are exactly zero, not mean rounding noise.
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x.rows() == 0 || x.col(j).maxCoeff() == x.col(j).minCoeff()) out(j) = Scalar(0);
  return out;
}

// (x - mean) / std, or zeros when every value is equal.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> standardize(const Eigen::MatrixBase<Derived>& x,
                                                                       typename Derived::Scalar* mean_out = nullptr,
                                                                       typename Derived::Scalar* std_out = nullptr) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = x.mean();
  // Equal values can leave rounding noise in the computed spread.
  const bool flat = x.size() == 0 || x.maxCoeff() == x.minCoeff();
  const Scalar s = flat ? Scalar(0) : population_std(x);
  if (mean_out) *mean_out = m;
  if (std_out) *std_out = s;
  if (s == Scalar(0)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(x.size());
  return ((x.array() - m) / s).matrix();
}

}  // namespace icleval::stats
