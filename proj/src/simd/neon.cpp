#include "owd/simd/kernels.hpp"

#include <arm_neon.h>
#include <cstring>

// NEON variants (2-lane f64). Same contract as avx2.cpp: vectorize across
// outputs only, mul+add, bit-identical to the scalar reference.

namespace owd::simd {

namespace {

void gemm_neon(int M, int N, int K, const double* A, const double* B, double* C,
               bool accumulate) {
    if (!accumulate) std::memset(C, 0, sizeof(double) * static_cast<std::size_t>(M) * N);
    for (int m = 0; m < M; ++m) {
        double* crow = C + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const double a = A[static_cast<std::size_t>(m) * K + k];
            const float64x2_t av = vdupq_n_f64(a);
            const double* brow = B + static_cast<std::size_t>(k) * N;
            int n = 0;
            for (; n + 2 <= N; n += 2) {
                float64x2_t c = vld1q_f64(crow + n);
                c = vaddq_f64(c, vmulq_f64(av, vld1q_f64(brow + n)));
                vst1q_f64(crow + n, c);
            }
            for (; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

void axpy_neon(int n, double a, const double* x, double* y) {
    const float64x2_t av = vdupq_n_f64(a);
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t yv = vld1q_f64(y + i);
        yv = vaddq_f64(yv, vmulq_f64(av, vld1q_f64(x + i)));
        vst1q_f64(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

constexpr double kLeakySlope = 0.01;

void relu_fwd_neon(int n, const double* x, double* y) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    const float64x2_t slope = vdupq_n_f64(kLeakySlope);
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t xv = vld1q_f64(x + i);
        const uint64x2_t mask = vcgtq_f64(xv, zero);
        vst1q_f64(y + i, vbslq_f64(mask, xv, vmulq_f64(slope, xv)));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : kLeakySlope * x[i];
}

void relu_bwd_neon(int n, const double* pre, const double* dy, double* dx) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    const float64x2_t slope = vdupq_n_f64(kLeakySlope);
    int i = 0;
    for (; i + 2 <= n; i += 2) {
        const uint64x2_t mask = vcgtq_f64(vld1q_f64(pre + i), zero);
        const float64x2_t dyv = vld1q_f64(dy + i);
        vst1q_f64(dx + i, vbslq_f64(mask, dyv, vmulq_f64(slope, dyv)));
    }
    for (; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : kLeakySlope * dy[i];
}

}  // namespace

const Kernels& neon_kernels() {
    static const Kernels k{"neon", gemm_neon, axpy_neon, relu_fwd_neon, relu_bwd_neon};
    return k;
}

}  // namespace owd::simd
