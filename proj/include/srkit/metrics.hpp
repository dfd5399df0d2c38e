#pragma once

#include <cstdint>
#include <vector>

#include "srkit/tensor.hpp"

namespace srkit {

// 8-bit RGB image, interleaved row-major.
struct ImageU8 {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> data; // h * w * 3

    ImageU8() = default;
    ImageU8(int h_, int w_) : h(h_), w(w_), data(size_t(h_) * w_ * 3, 0) {}

    uint8_t& at(int y, int x, int c) { return data[size_t((int64_t(y) * w + x) * 3 + c)]; }
    uint8_t at(int y, int x, int c) const { return data[size_t((int64_t(y) * w + x) * 3 + c)]; }
    bool operator==(const ImageU8&) const = default;
};

ImageU8 tensor_to_image(const TensorF32& t); // round-half-even, clamp to [0,255]
TensorF32 image_to_tensor(const ImageU8& img);

// bottom/right crop so both dims are multiples of `multiple`
ImageU8 crop_to_multiple(const ImageU8& img, int multiple);
ImageU8 crop(const ImageU8& img, int h, int w);

// 10*log10(255^2 / MSE) over all RGB samples, full frame, no border crop.
// Identical images cap at 100 dB so aggregation stays finite.
double psnr(const ImageU8& a, const ImageU8& b);
inline constexpr double kPsnrCap = 100.0;

// Single-scale SSIM: 11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03,
// L=255, per channel over the valid (fully-covered) window positions,
// averaged over channels and pixels. Images must be at least 11x11.
double ssim(const ImageU8& a, const ImageU8& b);

} // namespace srkit
