#include "srkit/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace srkit {

ImageU8 tensor_to_image(const TensorF32& t) {
    if (t.shape.c != 3)
        throw ShapeError("tensor_to_image: need 3 channels, got " + std::to_string(t.shape.c));
    ImageU8 img(t.shape.h, t.shape.w);
    for (size_t i = 0; i < t.data.size(); ++i) {
        const double v = round_half_even(double(t.data[i]));
        img.data[i] = uint8_t(std::min(255.0, std::max(0.0, v)));
    }
    return img;
}

TensorF32 image_to_tensor(const ImageU8& img) {
    TensorF32 t({img.h, img.w, 3});
    for (size_t i = 0; i < img.data.size(); ++i)
        t.data[i] = float(img.data[i]);
    return t;
}

ImageU8 crop(const ImageU8& img, int h, int w) {
    if (h > img.h || w > img.w || h < 1 || w < 1)
        throw ShapeError("crop: target exceeds image");
    ImageU8 out(h, w);
    for (int y = 0; y < h; ++y)
        std::copy_n(&img.data[size_t(int64_t(y) * img.w * 3)], size_t(w) * 3,
                    &out.data[size_t(int64_t(y) * w * 3)]);
    return out;
}

ImageU8 crop_to_multiple(const ImageU8& img, int multiple) {
    const int h = (img.h / multiple) * multiple;
    const int w = (img.w / multiple) * multiple;
    if (h == img.h && w == img.w)
        return img;
    return crop(img, h, w);
}

double psnr(const ImageU8& a, const ImageU8& b) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError("psnr: dimension mismatch " + std::to_string(a.h) + "x" +
                         std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                         std::to_string(b.w));
    double se = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        se += d * d;
    }
    const double mse = se / double(a.data.size());
    if (mse == 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace {

struct GaussianWindow {
    static constexpr int size = 11;
    double g[size];

    GaussianWindow() {
        constexpr double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < size; ++i) {
            const double d = i - (size - 1) / 2.0;
            g[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
            sum += g[i];
        }
        for (int i = 0; i < size; ++i)
            g[i] /= sum;
    }
};

} // namespace

double ssim(const ImageU8& a, const ImageU8& b) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError("ssim: dimension mismatch");
    constexpr int win = GaussianWindow::size;
    if (a.h < win || a.w < win)
        throw ShapeError("ssim: images must be at least 11x11, got " + std::to_string(a.h) + "x" +
                         std::to_string(a.w));
    static const GaussianWindow gw;
    constexpr double C1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double C2 = (0.03 * 255.0) * (0.03 * 255.0);

    const int hv = a.h - win + 1; // valid window positions
    const int wv = a.w - win + 1;
    double total = 0.0;

    // Separable filtering with an 11-row ring buffer per moment, one channel
    // at a time; memory stays O(w) regardless of image size.
    std::vector<double> ring(size_t(5) * win * wv);
    auto row = [&](int moment, int y) { return &ring[size_t((moment * win) + (y % win)) * wv]; };

    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < a.h; ++y) {
            double* fa = row(0, y);
            double* fb = row(1, y);
            double* faa = row(2, y);
            double* fbb = row(3, y);
            double* fab = row(4, y);
            for (int x = 0; x < wv; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int j = 0; j < win; ++j) {
                    const double av = a.at(y, x + j, c);
                    const double bv = b.at(y, x + j, c);
                    const double wgt = gw.g[j];
                    sa += wgt * av;
                    sb += wgt * bv;
                    saa += wgt * (av * av);
                    sbb += wgt * (bv * bv);
                    sab += wgt * (av * bv); // av*bv first: argument order cancels exactly
                }
                fa[x] = sa;
                fb[x] = sb;
                faa[x] = saa;
                fbb[x] = sbb;
                fab[x] = sab;
            }
            if (y < win - 1)
                continue;
            const int Y = y - win + 1;
            for (int x = 0; x < wv; ++x) {
                double mu1 = 0, mu2 = 0, m11 = 0, m22 = 0, m12 = 0;
                for (int i = 0; i < win; ++i) {
                    const double wgt = gw.g[i];
                    mu1 += wgt * row(0, Y + i)[x];
                    mu2 += wgt * row(1, Y + i)[x];
                    m11 += wgt * row(2, Y + i)[x];
                    m22 += wgt * row(3, Y + i)[x];
                    m12 += wgt * row(4, Y + i)[x];
                }
                const double var1 = m11 - mu1 * mu1;
                const double var2 = m22 - mu2 * mu2;
                const double cov = m12 - mu1 * mu2;
                const double val = ((2.0 * mu1 * mu2 + C1) * (2.0 * cov + C2)) /
                                   ((mu1 * mu1 + mu2 * mu2 + C1) * (var1 + var2 + C2));
                total += val;
            }
        }
    }
    return total / (double(hv) * wv * 3.0);
}

} // namespace srkit
