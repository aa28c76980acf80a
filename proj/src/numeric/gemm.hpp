#pragma once

#include <cstddef>

// Row-major accumulate-into kernels. Each output element is reduced in a
// fixed order that depends only on its own row and column, so results do not
// change with the number of rows processed together.
namespace kt::num::detail {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    for (std::size_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        const T* a = A + i * K;
        for (std::size_t p = 0; p < K; ++p) {
            const T av = a[p];
            const T* b = B + p * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    for (std::size_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        for (std::size_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            std::size_t p = 0;
            for (; p + 4 <= K; p += 4) {
                s0 += a[p] * b[p];
                s1 += a[p + 1] * b[p + 1];
                s2 += a[p + 2] * b[p + 2];
                s3 += a[p + 3] * b[p + 3];
            }
            for (; p < K; ++p) s0 += a[p] * b[p];
            c[j] += (s0 + s1) + (s2 + s3);
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    for (std::size_t p = 0; p < K; ++p) {
        const T* a = A + p * M;
        const T* b = B + p * N;
        for (std::size_t i = 0; i < M; ++i) {
            const T av = a[i];
            if (av == T{0}) continue;
            T* c = C + i * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace kt::num::detail
