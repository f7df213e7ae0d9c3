#include "owd/tensor.hpp"

#include <cmath>

namespace owd {

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace owd
