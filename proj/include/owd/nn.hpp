#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "owd/tensor.hpp"

namespace owd {

/// Ordered, named parameter collection. Order defines the flat index space
/// used by the optimizer, checkpoints, and finite-difference probes.
struct ParamDict {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor& add(const std::string& name, Tensor t) {
        items.emplace_back(name, std::move(t));
        return items.back().second;
    }
    Tensor* find(std::string_view name) {
        for (auto& [n, t] : items)
            if (n == name) return &t;
        return nullptr;
    }
    const Tensor* find(std::string_view name) const {
        return const_cast<ParamDict*>(this)->find(name);
    }

    static ParamDict zeros_like(const ParamDict& other) {
        ParamDict d;
        for (const auto& [n, t] : other.items) d.add(n, Tensor(t.shape));
        return d;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [_, t] : items) n += t.size();
        return n;
    }

    double get_flat(std::size_t i) const;
    void add_flat(std::size_t i, double v);

    void fill(double v) {
        for (auto& [_, t] : items) t.fill(v);
    }
    /// this += a * x (shapes must match item-for-item)
    void axpy(double a, const ParamDict& x);
    bool finite() const;
};

// ---------------------------------------------------------------------------
// scalar math helpers shared by the losses

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Overflow-safe softplus; strictly positive, ~x for large x.
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// d softplus / dx
inline double softplus_grad(double x) { return sigmoid(x); }

/// Binary cross-entropy with logits, numerically stable.
inline double bce_with_logits(double z, double target) {
    return std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
}

// ---------------------------------------------------------------------------
// convolution machinery (im2col + gemm)

struct Conv2dSpec {
    int in_c = 0, out_c = 0, ksize = 3, stride = 1, pad = 0;
    int out_dim(int in) const { return (in + 2 * pad - ksize) / stride + 1; }
    int patch() const { return in_c * ksize * ksize; }
};

/// input [C][H][W] -> col [C*k*k][Hout*Wout]
void im2col(const Tensor& input, const Conv2dSpec& spec, Tensor& col);
/// scatter-add of col gradients back to the input layout
void col2im(const Tensor& dcol, const Conv2dSpec& spec, int in_h, int in_w, Tensor& dinput);

void transpose(int rows, int cols, const double* in, double* out);

}  // namespace owd
