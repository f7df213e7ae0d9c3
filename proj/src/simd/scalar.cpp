#include "owd/simd/kernels.hpp"

#include <cstring>

// Scalar reference kernels. These define the numerical contract: every
// SIMD variant must reproduce them bit for bit.

namespace owd::simd {

namespace {

void gemm_scalar(int M, int N, int K, const double* A, const double* B, double* C,
                 bool accumulate) {
    if (!accumulate) std::memset(C, 0, sizeof(double) * static_cast<std::size_t>(M) * N);
    for (int m = 0; m < M; ++m) {
        double* crow = C + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const double a = A[static_cast<std::size_t>(m) * K + k];
            const double* brow = B + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

void axpy_scalar(int n, double a, const double* x, double* y) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

constexpr double kLeakySlope = 0.01;

void relu_fwd_scalar(int n, const double* x, double* y) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : kLeakySlope * x[i];
}

void relu_bwd_scalar(int n, const double* pre, const double* dy, double* dx) {
    for (int i = 0; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : kLeakySlope * dy[i];
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels k{"scalar", gemm_scalar, axpy_scalar, relu_fwd_scalar, relu_bwd_scalar};
    return k;
}

}  // namespace owd::simd
