#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "srkit/metrics.hpp"

using namespace srkit;

namespace {

ImageU8 random_u8(int h, int w, Rng& rng) {
    ImageU8 img(h, w);
    for (auto& v : img.data)
        v = uint8_t(rng.uniform_int(0, 255));
    return img;
}

// direct-formula SSIM, non-separable, no shared code with the implementation
double ssim_oracle(const ImageU8& a, const ImageU8& b) {
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    constexpr double C1 = 6.5025, C2 = 58.5225;
    double g[win][win];
    double sum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - 5.0, dx = j - 5.0;
            g[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            sum += g[i][j];
        }
    for (auto& row : g)
        for (double& v : row)
            v /= sum;

    double total = 0.0;
    int64_t count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y + win <= a.h; ++y)
            for (int x = 0; x + win <= a.w; ++x) {
                double mu1 = 0, mu2 = 0, m11 = 0, m22 = 0, m12 = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double av = a.at(y + i, x + j, c);
                        const double bv = b.at(y + i, x + j, c);
                        mu1 += g[i][j] * av;
                        mu2 += g[i][j] * bv;
                        m11 += g[i][j] * av * av;
                        m22 += g[i][j] * bv * bv;
                        m12 += g[i][j] * av * bv;
                    }
                const double v1 = m11 - mu1 * mu1, v2 = m22 - mu2 * mu2, cv = m12 - mu1 * mu2;
                total += ((2 * mu1 * mu2 + C1) * (2 * cv + C2)) /
                         ((mu1 * mu1 + mu2 * mu2 + C1) * (v1 + v2 + C2));
                ++count;
            }
    return total / double(count);
}

} // namespace

TEST_CASE("psnr: identical images cap at 100 dB") {
    Rng rng(501);
    const ImageU8 a = random_u8(16, 16, rng);
    CHECK(psnr(a, a) == kPsnrCap);
}

TEST_CASE("psnr: a uniform +1 offset gives the closed-form 48.1308 dB") {
    Rng rng(502);
    ImageU8 a(12, 12);
    for (auto& v : a.data)
        v = uint8_t(rng.uniform_int(0, 254));
    ImageU8 b = a;
    for (auto& v : b.data)
        v = uint8_t(v + 1);
    CHECK(psnr(a, b) == doctest::Approx(48.1308036087).epsilon(1e-9));
}

TEST_CASE("psnr: matches a scalar double-precision oracle, symmetric") {
    Rng rng(503);
    const ImageU8 a = random_u8(20, 17, rng);
    const ImageU8 b = random_u8(20, 17, rng);
    double se = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        se += d * d;
    }
    const double expect = 10.0 * std::log10(255.0 * 255.0 / (se / double(a.data.size())));
    CHECK(psnr(a, b) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(psnr(a, b) == psnr(b, a));

    const ImageU8 c = random_u8(20, 18, rng);
    CHECK_THROWS_AS((void)psnr(a, c), ShapeError);
}

TEST_CASE("ssim: identical images give exactly 1") {
    Rng rng(504);
    const ImageU8 a = random_u8(15, 14, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim: constant images follow the zero-variance closed form") {
    ImageU8 a(13, 13);
    ImageU8 b(13, 13);
    for (auto& v : a.data)
        v = 100;
    for (auto& v : b.data)
        v = 110;
    // (2*mu1*mu2 + C1) / (mu1^2 + mu2^2 + C1) with C1 = 6.5025
    CHECK(ssim(a, b) == doctest::Approx(0.9954764440915066).epsilon(1e-12));
}

TEST_CASE("ssim: matches the direct-formula oracle within 1e-6") {
    Rng rng(505);
    const ImageU8 a = random_u8(18, 15, rng);
    ImageU8 b = a;
    // correlated noise keeps the value in a realistic band
    for (auto& v : b.data)
        v = uint8_t(std::clamp(int(v) + rng.uniform_int(-9, 9), 0, 255));
    CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-6));
    CHECK(ssim(a, b) == ssim(b, a));
}

TEST_CASE("ssim: images below the window size are rejected") {
    Rng rng(506);
    const ImageU8 small = random_u8(10, 32, rng);
    CHECK_THROWS_AS((void)ssim(small, small), ShapeError);
}

TEST_CASE("tensor_to_image: round-half-even and clamping") {
    TensorF32 t({1, 6, 3});
    const float vals[6] = {-12.0f, 0.49f, 0.5f, 1.5f, 254.5f, 300.0f};
    for (int x = 0; x < 6; ++x)
        for (int c = 0; c < 3; ++c)
            t.at(0, x, c) = vals[x];
    const ImageU8 img = tensor_to_image(t);
    CHECK(img.at(0, 0, 0) == 0);   // clamped
    CHECK(img.at(0, 1, 0) == 0);   // 0.49 -> 0
    CHECK(img.at(0, 2, 0) == 0);   // 0.5 -> 0 (ties to even)
    CHECK(img.at(0, 3, 0) == 2);   // 1.5 -> 2
    CHECK(img.at(0, 4, 0) == 254); // 254.5 -> 254
    CHECK(img.at(0, 5, 0) == 255); // clamped
}

TEST_CASE("crop_to_multiple trims bottom/right only") {
    Rng rng(507);
    const ImageU8 img = random_u8(10, 11, rng);
    const ImageU8 c = crop_to_multiple(img, 3);
    CHECK(c.h == 9);
    CHECK(c.w == 9);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x)
            for (int ch = 0; ch < 3; ++ch)
                CHECK(c.at(y, x, ch) == img.at(y, x, ch));
}
