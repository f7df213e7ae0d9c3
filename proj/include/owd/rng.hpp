#pragma once

#include <cstdint>

namespace owd {

/// Counter-based deterministic RNG. Every draw is a pure hash of
/// (key, counter), so forked streams can be consumed in any order or in
/// parallel without changing the values they produce. All derived
/// distributions are built from integer arithmetic plus IEEE double
/// multiplies only, so sequences are reproducible across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(mix(seed) ^ mix(stream ^ 0x9e3779b97f4a7c15ull))) {}

    /// Child stream: independent of this stream's position.
    Rng fork(std::uint64_t substream) const {
        Rng r(0);
        r.key_ = mix(key_ ^ mix(substream + 0x632be59bd9b4e019ull));
        return r;
    }

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++ctr_); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    /// Approximate standard normal (Irwin-Hall, 12 uniforms). Bounded in
    /// [-6, 6] and free of libm calls, which keeps streams byte-stable
    /// across platforms.
    double normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform();
        return s - 6.0;
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

}  // namespace owd
