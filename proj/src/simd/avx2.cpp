#include "owd/simd/kernels.hpp"

#include <cstring>
#include <immintrin.h>

// AVX2 variants. Vectorized across the output (n) dimension so each
// element keeps the scalar accumulation order. mul+add is used instead of
// fmadd: the scalar reference compiles without contraction, and bitwise
// equivalence with it is part of the kernel contract.

namespace owd::simd {

namespace {

void gemm_avx2(int M, int N, int K, const double* A, const double* B, double* C,
               bool accumulate) {
    if (!accumulate) std::memset(C, 0, sizeof(double) * static_cast<std::size_t>(M) * N);
    for (int m = 0; m < M; ++m) {
        double* crow = C + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const double a = A[static_cast<std::size_t>(m) * K + k];
            const __m256d av = _mm256_set1_pd(a);
            const double* brow = B + static_cast<std::size_t>(k) * N;
            int n = 0;
            for (; n + 4 <= N; n += 4) {
                __m256d c = _mm256_loadu_pd(crow + n);
                __m256d b = _mm256_loadu_pd(brow + n);
                c = _mm256_add_pd(c, _mm256_mul_pd(av, b));
                _mm256_storeu_pd(crow + n, c);
            }
            for (; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

void axpy_avx2(int n, double a, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(a);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        __m256d xv = _mm256_loadu_pd(x + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(av, xv));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

constexpr double kLeakySlope = 0.01;

void relu_fwd_avx2(int n, const double* x, double* y) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d slope = _mm256_set1_pd(kLeakySlope);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(y + i, _mm256_blendv_pd(_mm256_mul_pd(slope, xv), xv, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : kLeakySlope * x[i];
}

void relu_bwd_avx2(int n, const double* pre, const double* dy, double* dx) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d slope = _mm256_set1_pd(kLeakySlope);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
        const __m256d dyv = _mm256_loadu_pd(dy + i);
        _mm256_storeu_pd(dx + i, _mm256_blendv_pd(_mm256_mul_pd(slope, dyv), dyv, mask));
    }
    for (; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : kLeakySlope * dy[i];
}

}  // namespace

const Kernels& avx2_kernels() {
    static const Kernels k{"avx2", gemm_avx2, axpy_avx2, relu_fwd_avx2, relu_bwd_avx2};
    return k;
}

}  // namespace owd::simd
