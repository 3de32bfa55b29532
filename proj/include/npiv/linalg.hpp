#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace npiv {

/// Result of a generalized inverse; `rank` counts the retained singular values.
template <typename Scalar>
struct PseudoInverse {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matrix;
  Eigen::Index rank = 0;
  bool full_rank = true;
};

template <typename Scalar>
Scalar pinv_cutoff(Scalar largest, Eigen::Index rows, Eigen::Index cols) {
  return largest * static_cast<Scalar>(std::max(rows, cols)) * std::numeric_limits<Scalar>::epsilon();
}

/// Moore-Penrose inverse via SVD; singular values below sigma_max * max(rows, cols) * eps are dropped.
template <typename Derived>
PseudoInverse<typename Derived::Scalar> pseudo_inverse(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  PseudoInverse<Scalar> out;
  if (a.size() == 0) {
    out.matrix = Mat::Zero(a.cols(), a.rows());
    return out;
  }
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const Scalar tol = pinv_cutoff(s(0), a.rows(), a.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol) {
      inv(i) = Scalar(1) / s(i);
      ++out.rank;
    }
  }
  out.full_rank = out.rank == std::min(a.rows(), a.cols());
  out.matrix = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

namespace detail {

// G^{-p} on the retained eigenspace of a symmetric PSD matrix. Its singular values
// are its eigenvalues, so the same relative cutoff as `pseudo_inverse` applies.
template <typename Derived>
PseudoInverse<typename Derived::Scalar> psd_inverse_power(const Eigen::MatrixBase<Derived>& g, bool square_root) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  PseudoInverse<Scalar> out;
  const Eigen::Index k = g.rows();
  if (k == 0) {
    out.matrix = Mat::Zero(0, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(g);
  const auto& lambda = eig.eigenvalues();
  const Scalar largest = std::max(lambda.maxCoeff(), Scalar(0));
  const Scalar tol = pinv_cutoff(largest, k, k);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (lambda(i) > tol) {
      inv(i) = square_root ? Scalar(1) / std::sqrt(lambda(i)) : Scalar(1) / lambda(i);
      ++out.rank;
    }
  }
  out.full_rank = out.rank == k;
  out.matrix = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return out;
}

}  // namespace detail

/// Generalized inverse of a symmetric positive semidefinite (Gram) matrix.
template <typename Derived>
PseudoInverse<typename Derived::Scalar> psd_pseudo_inverse(const Eigen::MatrixBase<Derived>& g) {
  return detail::psd_inverse_power(g, false);
}

/// Pseudo inverse square root G^{-1/2} of a symmetric PSD matrix.
template <typename Derived>
PseudoInverse<typename Derived::Scalar> psd_inverse_sqrt(const Eigen::MatrixBase<Derived>& g) {
  return detail::psd_inverse_power(g, true);
}

/// Whitening map W = V_r diag(lambda_r^{-1/2}) of a symmetric PSD matrix G, restricted
/// to the retained eigenspace: W' G W = I_r and W W' = G^-.
template <typename Derived>
PseudoInverse<typename Derived::Scalar> psd_whitener(const Eigen::MatrixBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  PseudoInverse<Scalar> out;
  const Eigen::Index k = g.rows();
  if (k == 0) {
    out.matrix = Mat::Zero(0, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(g);
  const auto& lambda = eig.eigenvalues();
  const Scalar tol = pinv_cutoff(std::max(lambda.maxCoeff(), Scalar(0)), k, k);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < k; ++i)
    if (lambda(i) > tol) keep.push_back(i);
  out.rank = static_cast<Eigen::Index>(keep.size());
  out.full_rank = out.rank == k;
  out.matrix.resize(k, out.rank);
  for (Eigen::Index j = 0; j < out.rank; ++j)
    out.matrix.col(j) = eig.eigenvectors().col(keep[j]) / std::sqrt(lambda(keep[j]));
  return out;
}

}  // namespace npiv
