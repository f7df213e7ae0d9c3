#include "owd/simd/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace owd::simd {

const Kernels& scalar_kernels();
#if defined(OWD_HAVE_AVX2_TU)
const Kernels& avx2_kernels();
#endif
#if defined(OWD_HAVE_NEON_TU)
const Kernels& neon_kernels();
#endif

namespace {

Isa detect() {
#if defined(OWD_HAVE_AVX2_TU)
    if (__builtin_cpu_supports("avx2")) return Isa::avx2;
#endif
#if defined(OWD_HAVE_NEON_TU)
    return Isa::neon;  // baseline on aarch64
#endif
    return Isa::scalar;
}

std::atomic<const Kernels*> g_active{nullptr};
std::atomic<Isa> g_active_isa{Isa::scalar};

void select(Isa isa) {
    g_active.store(&kernels_for(isa), std::memory_order_relaxed);
    g_active_isa.store(isa, std::memory_order_relaxed);
}

struct AutoInit {
    AutoInit() { select(detect()); }
};

AutoInit& init() {
    static AutoInit a;
    return a;
}

}  // namespace

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(OWD_HAVE_AVX2_TU)
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Isa::neon:
#if defined(OWD_HAVE_NEON_TU)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const Kernels& kernels_for(Isa isa) {
    if (!isa_available(isa)) throw std::invalid_argument("isa not available: " + isa_name(isa));
    switch (isa) {
        case Isa::scalar:
            return scalar_kernels();
#if defined(OWD_HAVE_AVX2_TU)
        case Isa::avx2:
            return avx2_kernels();
#endif
#if defined(OWD_HAVE_NEON_TU)
        case Isa::neon:
            return neon_kernels();
#endif
        default:
            return scalar_kernels();
    }
}

const Kernels& active() {
    init();
    return *g_active.load(std::memory_order_relaxed);
}

Isa active_isa() {
    init();
    return g_active_isa.load(std::memory_order_relaxed);
}

void force_isa(Isa isa) {
    init();
    select(isa);
}

void reset_isa() {
    init();
    select(detect());
}

std::string isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
        case Isa::neon:
            return "neon";
    }
    return "?";
}

}  // namespace owd::simd
