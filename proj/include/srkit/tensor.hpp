#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srkit/errors.hpp"

namespace srkit {

// All tensors are single-image, HWC row-major. Image-domain tensors hold
// values in [0, 255].
struct Shape {
    int h = 0;
    int w = 0;
    int c = 0;

    int64_t elems() const { return int64_t(h) * w * c; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

struct TensorF32 {
    Shape shape;
    std::vector<float> data;

    TensorF32() = default;
    explicit TensorF32(Shape s) : shape(s), data(size_t(s.elems()), 0.0f) {}
    TensorF32(Shape s, std::vector<float> d);

    float& at(int y, int x, int c) { return data[size_t((int64_t(y) * shape.w + x) * shape.c + c)]; }
    float at(int y, int x, int c) const { return data[size_t((int64_t(y) * shape.w + x) * shape.c + c)]; }

    static TensorF32 zeros(Shape s) { return TensorF32(s); }
};

// Affine quantization: real = scale * (q - zero_point). Weight tensors are
// symmetric (zero_point = 0) throughout.
struct QuantParams {
    double scale = 1.0;
    int zero_point = 0;

    bool operator==(const QuantParams&) const = default;
};

struct TensorI8 {
    Shape shape;
    std::vector<int8_t> data;
    QuantParams qp;

    TensorI8() = default;
    TensorI8(Shape s, QuantParams p) : shape(s), data(size_t(s.elems()), 0), qp(p) {}

    int8_t& at(int y, int x, int c) { return data[size_t((int64_t(y) * shape.w + x) * shape.c + c)]; }
    int8_t at(int y, int x, int c) const { return data[size_t((int64_t(y) * shape.w + x) * shape.c + c)]; }
};

// Banker's rounding; the single rounding rule used everywhere a real value
// becomes an integer (weights, biases, pixels, requantization).
inline double round_half_even(double v) { return std::nearbyint(v); }

TensorF32 add_elementwise(const TensorF32& a, const TensorF32& b);
TensorF32 concat_channels(std::span<const TensorF32> parts);
TensorF32 clamp(const TensorF32& a, float lo, float hi);

TensorI8 quantize(const TensorF32& x, QuantParams qp);
TensorF32 dequantize(const TensorI8& x);

// Worker-thread control for all data-parallel kernels. n <= 0 restores the
// runtime default. Results are identical for every thread count.
void set_worker_threads(int n);
int worker_threads();

} // namespace srkit
