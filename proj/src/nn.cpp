#include "owd/nn.hpp"

#include <cassert>
#include <cstring>

namespace owd {

double ParamDict::get_flat(std::size_t i) const {
    for (const auto& [_, t] : items) {
        if (i < t.size()) return t.data[i];
        i -= t.size();
    }
    assert(false && "flat index out of range");
    return 0.0;
}

void ParamDict::add_flat(std::size_t i, double v) {
    for (auto& [_, t] : items) {
        if (i < t.size()) {
            t.data[i] += v;
            return;
        }
        i -= t.size();
    }
    assert(false && "flat index out of range");
}

void ParamDict::axpy(double a, const ParamDict& x) {
    assert(items.size() == x.items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
        auto& dst = items[k].second;
        const auto& src = x.items[k].second;
        assert(dst.size() == src.size());
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += a * src.data[i];
    }
}

bool ParamDict::finite() const {
    for (const auto& [_, t] : items)
        if (!all_finite(t)) return false;
    return true;
}

void im2col(const Tensor& input, const Conv2dSpec& spec, Tensor& col) {
    const int in_h = input.dim(1), in_w = input.dim(2);
    const int out_h = spec.out_dim(in_h), out_w = spec.out_dim(in_w);
    const int patches = out_h * out_w;
    col = Tensor({spec.patch(), patches});
    double* dst = col.ptr();
    for (int c = 0; c < spec.in_c; ++c) {
        const double* chan = input.ptr() + static_cast<std::size_t>(c) * in_h * in_w;
        for (int ky = 0; ky < spec.ksize; ++ky) {
            for (int kx = 0; kx < spec.ksize; ++kx) {
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * spec.stride + ky - spec.pad;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * spec.stride + kx - spec.pad;
                        *dst++ = (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                                     ? chan[static_cast<std::size_t>(iy) * in_w + ix]
                                     : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const Tensor& dcol, const Conv2dSpec& spec, int in_h, int in_w, Tensor& dinput) {
    const int out_h = spec.out_dim(in_h), out_w = spec.out_dim(in_w);
    dinput = Tensor({spec.in_c, in_h, in_w});
    const double* src = dcol.ptr();
    for (int c = 0; c < spec.in_c; ++c) {
        double* chan = dinput.ptr() + static_cast<std::size_t>(c) * in_h * in_w;
        for (int ky = 0; ky < spec.ksize; ++ky) {
            for (int kx = 0; kx < spec.ksize; ++kx) {
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * spec.stride + ky - spec.pad;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * spec.stride + kx - spec.pad;
                        const double v = *src++;
                        if (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                            chan[static_cast<std::size_t>(iy) * in_w + ix] += v;
                    }
                }
            }
        }
    }
}

void transpose(int rows, int cols, const double* in, double* out) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(c) * rows + r] = in[static_cast<std::size_t>(r) * cols + c];
}

}  // namespace owd
