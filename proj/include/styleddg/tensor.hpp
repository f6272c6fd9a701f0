#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace styleddg {

// Error taxonomy shared across the library.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Shape {
    int b = 0, c = 0, h = 0, w = 0;

    std::int64_t size() const {
        return static_cast<std::int64_t>(b) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense rank-4 array, row-major (b,c,h,w), double precision. This is the
// single canonical layout; every oracle comparison relies on it.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape s, double fill = 0.0) : shape_(s) {
        if (s.b < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            throw ShapeError("Tensor4: non-positive dims " + s.str());
        v_.assign(static_cast<std::size_t>(s.size()), fill);
    }
    Tensor4(Shape s, std::vector<double> v) : shape_(s), v_(std::move(v)) {
        if (static_cast<std::int64_t>(v_.size()) != s.size())
            throw ShapeError("Tensor4: value count " + std::to_string(v_.size()) +
                             " does not match dims " + s.str());
    }

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return shape_.size(); }

    double& at(int b, int c, int h, int w) { return v_[idx(b, c, h, w)]; }
    double at(int b, int c, int h, int w) const { return v_[idx(b, c, h, w)]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& vec() { return v_; }
    const std::vector<double>& vec() const { return v_; }

    bool all_finite() const;
    double max_abs() const;

    bool operator==(const Tensor4&) const = default;

private:
    std::size_t idx(int b, int c, int h, int w) const {
        return ((static_cast<std::size_t>(b) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    Shape shape_{};
    std::vector<double> v_;
};

// Max absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor4& a, const Tensor4& b);

}  // namespace styleddg
