#include "srkit/ops.hpp"

#include <algorithm>
#include <cmath>

namespace srkit {

void ConvSpec::check() const {
    if (kernel < 1 || kernel % 2 == 0)
        throw ShapeError("conv: kernel size must be odd and >= 1, got " + std::to_string(kernel));
    if (in_channels < 1 || out_channels < 1)
        throw ShapeError("conv: channel counts must be >= 1");
    if (int64_t(weights.size()) != int64_t(out_channels) * kernel * kernel * in_channels)
        throw ShapeError("conv: weight length " + std::to_string(weights.size()) +
                         " does not match " + std::to_string(out_channels) + "x" +
                         std::to_string(kernel) + "x" + std::to_string(kernel) + "x" +
                         std::to_string(in_channels));
    if (int(bias.size()) != out_channels)
        throw ShapeError("conv: bias length does not match out_channels");
    if (activation.kind == Activation::Clip && activation.lo > activation.hi)
        throw ShapeError("conv: clip activation with lo > hi");
}

ConvSpec make_conv(int kernel, int in_channels, int out_channels, ActivationSpec act) {
    ConvSpec s;
    s.kernel = kernel;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.weights.assign(size_t(int64_t(out_channels) * kernel * kernel * in_channels), 0.0f);
    s.bias.assign(size_t(out_channels), 0.0f);
    s.activation = act;
    s.check();
    return s;
}

float activate(float v, const ActivationSpec& act) {
    switch (act.kind) {
    case Activation::None: return v;
    case Activation::Relu: return v > 0.0f ? v : 0.0f;
    case Activation::Clip: return std::min(act.hi, std::max(act.lo, v));
    }
    return v;
}

TensorF32 conv2d(const TensorF32& x, const ConvSpec& spec) {
    spec.check();
    if (x.shape.c != spec.in_channels)
        throw ShapeError("conv: input has " + std::to_string(x.shape.c) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
    const int h = x.shape.h, w = x.shape.w;
    const int k = spec.kernel, pad = (k - 1) / 2;
    const int cin = spec.in_channels, cout = spec.out_channels;
    TensorF32 out({h, w, cout});

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        std::vector<float> acc(static_cast<size_t>(cout));
        const int u0 = std::max(0, pad - y);
        const int u1 = std::min(k, h + pad - y);
        for (int xx = 0; xx < w; ++xx) {
            const int v0 = std::max(0, pad - xx);
            const int v1 = std::min(k, w + pad - xx);
            std::copy(spec.bias.begin(), spec.bias.end(), acc.begin());
            // Out-of-image taps are zero padding and contribute nothing;
            // per output channel the visited taps still arrive in u->v->i order.
            for (int u = u0; u < u1; ++u) {
                const float* xrow = &x.data[size_t((int64_t(y + u - pad) * w + (xx + v0 - pad)) * cin)];
                for (int v = v0; v < v1; ++v) {
                    for (int o = 0; o < cout; ++o) {
                        const float* wp = &spec.weights[size_t(((int64_t(o) * k + u) * k + v) * cin)];
                        float s = acc[size_t(o)];
                        for (int i = 0; i < cin; ++i)
                            s += wp[i] * xrow[i];
                        acc[size_t(o)] = s;
                    }
                    xrow += cin;
                }
            }
            float* op = &out.data[size_t((int64_t(y) * w + xx) * cout)];
            for (int o = 0; o < cout; ++o)
                op[o] = activate(acc[size_t(o)], spec.activation);
        }
    }
    return out;
}

TensorF32 depth_to_space(const TensorF32& x, int block) {
    if (block < 1)
        throw ShapeError("depth_to_space: block must be >= 1");
    if (x.shape.c % (block * block) != 0)
        throw ShapeError("depth_to_space: " + std::to_string(x.shape.c) +
                         " channels not divisible by block^2 = " + std::to_string(block * block));
    const int h = x.shape.h, w = x.shape.w;
    const int cout = x.shape.c / (block * block);
    TensorF32 out({h * block, w * block, cout});
#pragma omp parallel for schedule(static)
    for (int Y = 0; Y < h * block; ++Y) {
        const int y = Y / block, dy = Y % block;
        for (int X = 0; X < w * block; ++X) {
            const int xq = X / block, dx = X % block;
            const int g = dy * block + dx;
            const float* src = &x.data[size_t((int64_t(y) * w + xq) * x.shape.c + g * cout)];
            float* dst = &out.data[size_t((int64_t(Y) * (w * block) + X) * cout)];
            std::copy(src, src + cout, dst);
        }
    }
    return out;
}

TensorF32 space_to_depth(const TensorF32& x, int block) {
    if (block < 1)
        throw ShapeError("space_to_depth: block must be >= 1");
    if (x.shape.h % block != 0 || x.shape.w % block != 0)
        throw ShapeError("space_to_depth: " + x.shape.str() +
                         " spatial dims not divisible by block " + std::to_string(block));
    const int h = x.shape.h / block, w = x.shape.w / block;
    const int cin = x.shape.c;
    TensorF32 out({h, w, cin * block * block});
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x2 = 0; x2 < w; ++x2) {
            float* dst = &out.data[size_t((int64_t(y) * w + x2) * out.shape.c)];
            for (int dy = 0; dy < block; ++dy) {
                for (int dx = 0; dx < block; ++dx) {
                    const float* src =
                        &x.data[size_t((int64_t(y * block + dy) * x.shape.w + (x2 * block + dx)) * cin)];
                    std::copy(src, src + cin, dst + (dy * block + dx) * cin);
                }
            }
        }
    }
    return out;
}

TensorF32 resize_nearest(const TensorF32& x, int scale) {
    if (scale < 1)
        throw ShapeError("resize_nearest: scale must be >= 1");
    const int h = x.shape.h, w = x.shape.w, c = x.shape.c;
    TensorF32 out({h * scale, w * scale, c});
#pragma omp parallel for schedule(static)
    for (int Y = 0; Y < h * scale; ++Y) {
        const int y = Y / scale;
        for (int X = 0; X < w * scale; ++X) {
            const float* src = &x.data[size_t((int64_t(y) * w + X / scale) * c)];
            std::copy(src, src + c, &out.data[size_t((int64_t(Y) * (w * scale) + X) * c)]);
        }
    }
    return out;
}

namespace {

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0)
        return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0)
        return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

struct ResampleTaps {
    int taps = 0;
    std::vector<int> start;        // per output index, first source index
    std::vector<double> weights;   // out_size * taps, normalized
};

ResampleTaps cubic_taps(int out_size, double scale, bool antialias) {
    const double kscale = (antialias && scale < 1.0) ? scale : 1.0;
    const double width = 4.0 / kscale;
    ResampleTaps r;
    r.taps = int(std::ceil(width)) + 2;
    r.start.resize(size_t(out_size));
    r.weights.resize(size_t(out_size) * r.taps);
    for (int o = 0; o < out_size; ++o) {
        const double u = (o + 0.5) / scale - 0.5;
        const int i0 = int(std::floor(u - width / 2.0)) + 1;
        r.start[size_t(o)] = i0;
        double sum = 0.0;
        for (int j = 0; j < r.taps; ++j) {
            double wgt = kscale * cubic_kernel(kscale * (u - (i0 + j)));
            r.weights[size_t(o) * r.taps + j] = wgt;
            sum += wgt;
        }
        for (int j = 0; j < r.taps; ++j)
            r.weights[size_t(o) * r.taps + j] /= sum;
    }
    return r;
}

} // namespace

TensorF32 resize_bicubic(const TensorF32& x, double scale, bool antialias) {
    if (scale <= 0.0)
        throw ShapeError("resize_bicubic: scale must be positive");
    const int h = x.shape.h, w = x.shape.w, c = x.shape.c;
    const int oh = int(std::ceil(double(h) * scale - 1e-9));
    const int ow = int(std::ceil(double(w) * scale - 1e-9));

    const ResampleTaps tx = cubic_taps(ow, scale, antialias);
    const ResampleTaps ty = cubic_taps(oh, scale, antialias);

    // horizontal pass
    TensorF32 tmp({h, ow, c});
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int X = 0; X < ow; ++X) {
            const double* wgt = &tx.weights[size_t(X) * tx.taps];
            const int i0 = tx.start[size_t(X)];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < tx.taps; ++j) {
                    const int xi = std::clamp(i0 + j, 0, w - 1);
                    acc += wgt[j] * x.at(y, xi, ch);
                }
                tmp.at(y, X, ch) = float(acc);
            }
        }
    }
    // vertical pass
    TensorF32 out({oh, ow, c});
#pragma omp parallel for schedule(static)
    for (int Y = 0; Y < oh; ++Y) {
        const double* wgt = &ty.weights[size_t(Y) * ty.taps];
        const int i0 = ty.start[size_t(Y)];
        for (int X = 0; X < ow; ++X) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < ty.taps; ++j) {
                    const int yi = std::clamp(i0 + j, 0, h - 1);
                    acc += wgt[j] * tmp.at(yi, X, ch);
                }
                out.at(Y, X, ch) = float(acc);
            }
        }
    }
    return out;
}

TensorF32 apply_activation(const TensorF32& x, const ActivationSpec& act) {
    if (act.kind == Activation::Clip && act.lo > act.hi)
        throw ShapeError("apply_activation: clip with lo > hi");
    TensorF32 out(x.shape);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(x.data.size()); ++i)
        out.data[size_t(i)] = activate(x.data[size_t(i)], act);
    return out;
}

} // namespace srkit
