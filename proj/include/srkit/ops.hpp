#pragma once

#include <vector>

#include "srkit/tensor.hpp"

namespace srkit {

enum class Activation { None, Relu, Clip };

struct ActivationSpec {
    Activation kind = Activation::None;
    float lo = 0.0f;
    float hi = 0.0f;

    static ActivationSpec none() { return {Activation::None, 0.0f, 0.0f}; }
    static ActivationSpec relu() { return {Activation::Relu, 0.0f, 0.0f}; }
    static ActivationSpec clip(float lo, float hi) { return {Activation::Clip, lo, hi}; }
    bool operator==(const ActivationSpec&) const = default;
};

// Stride-1, SAME zero padding convolution. Weights are OHWI:
// weights[((o*k + u)*k + v)*in + i]. Kernel size is odd (1, 3 or 5).
struct ConvSpec {
    int kernel = 1;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<float> weights; // out * k * k * in
    std::vector<float> bias;    // out
    ActivationSpec activation;

    float& w(int o, int u, int v, int i) {
        return weights[size_t(((int64_t(o) * kernel + u) * kernel + v) * in_channels + i)];
    }
    float w(int o, int u, int v, int i) const {
        return weights[size_t(((int64_t(o) * kernel + u) * kernel + v) * in_channels + i)];
    }
    int64_t param_count() const { return int64_t(weights.size()) + int64_t(bias.size()); }
    void check() const; // throws ShapeError on malformed specs
};

ConvSpec make_conv(int kernel, int in_channels, int out_channels,
                   ActivationSpec act = ActivationSpec::none());

float activate(float v, const ActivationSpec& act);

// Per-output-element accumulation order is fixed (bias first, then taps in
// u -> v -> i order), so results are bit-stable across runs and worker-thread
// counts. Parallelism splits output pixels, never a single accumulation.
TensorF32 conv2d(const TensorF32& x, const ConvSpec& spec);

// out[y*b+dy, x*b+dx, c] = x[y, x, (dy*b+dx)*c_out + c], c_out = c_in / b^2.
// Subpixel-major channel ordering; space_to_depth is its exact inverse.
TensorF32 depth_to_space(const TensorF32& x, int block);
TensorF32 space_to_depth(const TensorF32& x, int block);

TensorF32 resize_nearest(const TensorF32& x, int scale);

// Separable cubic kernel, a = -0.5; output dims are ceil(in * scale).
// Antialias widens the kernel by 1/scale when downscaling (the convention
// DIV2K-style low-resolution inputs are generated with). Border handling
// clamps source coordinates; tap weights are renormalized to sum 1.
TensorF32 resize_bicubic(const TensorF32& x, double scale, bool antialias);

TensorF32 apply_activation(const TensorF32& x, const ActivationSpec& act);

} // namespace srkit
