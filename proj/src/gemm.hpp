#pragma once

#include <cstddef>

namespace adstage::detail {

// Row-major single-precision matrix products. All of them accumulate into C.
// Loop order is fixed so results are bit-reproducible.

// C[M,N] += A[M,K] * B[K,N], accumulated in double
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C);

// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C);

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C);

} // namespace adstage::detail
