#include "gemm.hpp"

#include <algorithm>
#include <vector>

namespace adstage::detail {

namespace {
constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockM = 64;
} // namespace

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C)
{
    // rows of C are summed in double and rounded once
    std::vector<double> acc(kBlockM * N);
    for (std::size_t i0 = 0; i0 < M; i0 += kBlockM) {
        const std::size_t i1 = std::min(M, i0 + kBlockM);
        for (std::size_t i = i0; i < i1; ++i)
            for (std::size_t j = 0; j < N; ++j)
                acc[(i - i0) * N + j] = C[i * N + j];
        for (std::size_t k0 = 0; k0 < K; k0 += kBlockK) {
            const std::size_t k1 = std::min(K, k0 + kBlockK);
            for (std::size_t i = i0; i < i1; ++i) {
                double* __restrict arow_acc = acc.data() + (i - i0) * N;
                const float* arow = A + i * K;
                for (std::size_t k = k0; k < k1; ++k) {
                    const double a = arow[k];
                    if (a == 0.0)
                        continue;
                    const float* __restrict brow = B + k * N;
                    for (std::size_t j = 0; j < N; ++j)
                        arow_acc[j] += a * brow[j];
                }
            }
        }
        for (std::size_t i = i0; i < i1; ++i)
            for (std::size_t j = 0; j < N; ++j)
                C[i * N + j] = static_cast<float>(acc[(i - i0) * N + j]);
    }
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C)
{
    for (std::size_t k = 0; k < K; ++k) {
        const float* arow = A + k * M;
        const float* __restrict brow = B + k * N;
        for (std::size_t i = 0; i < M; ++i) {
            const float a = arow[i];
            if (a == 0.0f)
                continue;
            float* __restrict crow = C + i * N;
            for (std::size_t j = 0; j < N; ++j)
                crow[j] += a * brow[j];
        }
    }
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C)
{
    std::vector<float> bt(K * N);
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t k = 0; k < K; ++k)
            bt[k * N + j] = B[j * K + k];
    gemm_nn(M, N, K, A, bt.data(), C);
}

} // namespace adstage::detail
