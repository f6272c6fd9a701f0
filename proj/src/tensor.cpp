#include "styleddg/tensor.hpp"

#include <cmath>

namespace styleddg {

bool Tensor4::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

double Tensor4::max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::fabs(x));
    return m;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    if (!(a.shape() == b.shape()))
        throw ShapeError("max_abs_diff: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace styleddg
