#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace capvae::nn::detail {

// Row-major C = alpha * op(A) . op(B) + beta * C, with op(X) = X or X^T.
// A is [M,K] (or [K,M] when trans_a), B is [K,N] (or [N,K] when trans_b).
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          const T* b, T beta, T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
  Eigen::Map<Mat> C(c, M, N);
  if (beta == T{0}) C.setZero();
  else if (beta != T{1}) C *= beta;
  const CMap A(a, trans_a ? K : M, trans_a ? M : K);
  const CMap B(b, trans_b ? N : K, trans_b ? K : N);
  if (!trans_a && !trans_b) C.noalias() += alpha * A * B;
  else if (trans_a && !trans_b) C.noalias() += alpha * A.transpose() * B;
  else if (!trans_a && trans_b) C.noalias() += alpha * A * B.transpose();
  else C.noalias() += alpha * A.transpose() * B.transpose();
}

}  // namespace capvae::nn::detail
