#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "owd/rng.hpp"

namespace owd {

/// Dense row-major double tensor. Intentionally minimal: shape plus flat
/// storage, with the arithmetic delegated to owd::simd kernels at the call
/// sites that need speed.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(count(shape), fill) {}

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) n *= static_cast<std::size_t>(d);
        return n;
    }

    std::size_t size() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // [C][H][W] indexing for feature maps
    double& at3(int c, int h, int w) {
        return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    double at3(int c, int h, int w) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Tensor randn(std::vector<int> s, Rng& rng, double sigma = 1.0) {
        Tensor t(std::move(s));
        for (auto& v : t.data) v = sigma * rng.normal();
        return t;
    }
};

bool all_finite(const Tensor& t);

}  // namespace owd
