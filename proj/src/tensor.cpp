#include "srkit/tensor.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace srkit {

std::string Shape::str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

TensorF32::TensorF32(Shape s, std::vector<float> d) : shape(s), data(std::move(d)) {
    if (int64_t(data.size()) != shape.elems())
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
}

TensorF32 add_elementwise(const TensorF32& a, const TensorF32& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    TensorF32 out(a.shape);
    const size_t n = a.data.size();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(n); ++i)
        out.data[size_t(i)] = a.data[size_t(i)] + b.data[size_t(i)];
    return out;
}

TensorF32 concat_channels(std::span<const TensorF32> parts) {
    if (parts.empty())
        throw ShapeError("concat: no inputs");
    const int h = parts[0].shape.h, w = parts[0].shape.w;
    int c_total = 0;
    for (const auto& p : parts) {
        if (p.shape.h != h || p.shape.w != w)
            throw ShapeError("concat: spatial mismatch " + parts[0].shape.str() + " vs " + p.shape.str());
        c_total += p.shape.c;
    }
    TensorF32 out({h, w, c_total});
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float* dst = &out.data[size_t((int64_t(y) * w + x) * c_total)];
            for (const auto& p : parts) {
                const float* src = &p.data[size_t((int64_t(y) * w + x) * p.shape.c)];
                dst = std::copy(src, src + p.shape.c, dst);
            }
        }
    }
    return out;
}

TensorF32 clamp(const TensorF32& a, float lo, float hi) {
    if (lo > hi)
        throw ShapeError("clamp: lo " + std::to_string(lo) + " > hi " + std::to_string(hi));
    TensorF32 out(a.shape);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(a.data.size()); ++i)
        out.data[size_t(i)] = std::min(hi, std::max(lo, a.data[size_t(i)]));
    return out;
}

TensorI8 quantize(const TensorF32& x, QuantParams qp) {
    if (qp.scale <= 0.0)
        throw QuantError("quantize: non-positive scale");
    TensorI8 out(x.shape, qp);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(x.data.size()); ++i) {
        double q = round_half_even(double(x.data[size_t(i)]) / qp.scale) + qp.zero_point;
        out.data[size_t(i)] = int8_t(std::min(127.0, std::max(-128.0, q)));
    }
    return out;
}

TensorF32 dequantize(const TensorI8& x) {
    TensorF32 out(x.shape);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(x.data.size()); ++i)
        out.data[size_t(i)] = float(x.qp.scale * (int(x.data[size_t(i)]) - x.qp.zero_point));
    return out;
}

void set_worker_threads(int n) {
#ifdef _OPENMP
    if (n > 0)
        omp_set_num_threads(n);
    else
        omp_set_num_threads(omp_get_num_procs());
#else
    (void)n;
#endif
}

int worker_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace srkit
