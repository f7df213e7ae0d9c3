#pragma once

#include <string>

namespace owd::simd {

enum class Isa { scalar, avx2, neon };

/// Kernel table for the dense inner loops of the net. All variants are
/// required to produce bit-identical results to the scalar reference:
/// they vectorize across independent outputs only, never reorder
/// accumulation, and use separate mul/add (no FMA). Equivalence is
/// enforced by tests/test_kernels.cpp.
struct Kernels {
    const char* name;

    /// C[M x N] = (accumulate ? C : 0) + A[M x K] * B[K x N], row-major.
    void (*gemm)(int M, int N, int K, const double* A, const double* B, double* C,
                 bool accumulate);

    /// y[i] += a * x[i]
    void (*axpy)(int n, double a, const double* x, double* y);

    /// leaky relu: y[i] = x[i] > 0 ? x[i] : slope * x[i]
    void (*relu_fwd)(int n, const double* x, double* y);

    /// dx[i] = pre[i] > 0 ? dy[i] : slope * dy[i]
    void (*relu_bwd)(int n, const double* pre, const double* dy, double* dx);
};

/// Kernel table selected at startup from CPU capabilities (overridable).
const Kernels& active();
Isa active_isa();

bool isa_available(Isa isa);
const Kernels& kernels_for(Isa isa);  // throws std::invalid_argument if unavailable

/// Test/benchmark hook: pin the active table to one ISA.
void force_isa(Isa isa);
void reset_isa();

std::string isa_name(Isa isa);

}  // namespace owd::simd
