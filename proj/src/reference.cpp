#include "srkit/reference.hpp"

#include <algorithm>
#include <map>

namespace srkit::ref {

TensorF32 conv2d(const TensorF32& x, const ConvSpec& spec) {
    spec.check();
    if (x.shape.c != spec.in_channels)
        throw ShapeError("ref::conv2d: channel mismatch");
    const int h = x.shape.h, w = x.shape.w;
    const int k = spec.kernel, pad = (k - 1) / 2;
    TensorF32 out({h, w, spec.out_channels});
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            for (int o = 0; o < spec.out_channels; ++o) {
                float acc = spec.bias[size_t(o)];
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        const int sy = y + u - pad;
                        const int sx = xx + v - pad;
                        if (sy < 0 || sy >= h || sx < 0 || sx >= w)
                            continue; // zero padding
                        for (int i = 0; i < spec.in_channels; ++i)
                            acc += spec.w(o, u, v, i) * x.at(sy, sx, i);
                    }
                }
                out.at(y, xx, o) = activate(acc, spec.activation);
            }
        }
    }
    return out;
}

TensorF32 depth_to_space(const TensorF32& x, int block) {
    if (block < 1 || x.shape.c % (block * block) != 0)
        throw ShapeError("ref::depth_to_space: bad block");
    const int cout = x.shape.c / (block * block);
    TensorF32 out({x.shape.h * block, x.shape.w * block, cout});
    for (int y = 0; y < x.shape.h; ++y)
        for (int xx = 0; xx < x.shape.w; ++xx)
            for (int dy = 0; dy < block; ++dy)
                for (int dx = 0; dx < block; ++dx)
                    for (int c = 0; c < cout; ++c)
                        out.at(y * block + dy, xx * block + dx, c) =
                            x.at(y, xx, (dy * block + dx) * cout + c);
    return out;
}

TensorF32 space_to_depth(const TensorF32& x, int block) {
    if (block < 1 || x.shape.h % block != 0 || x.shape.w % block != 0)
        throw ShapeError("ref::space_to_depth: bad block");
    TensorF32 out({x.shape.h / block, x.shape.w / block, x.shape.c * block * block});
    for (int y = 0; y < out.shape.h; ++y)
        for (int xx = 0; xx < out.shape.w; ++xx)
            for (int dy = 0; dy < block; ++dy)
                for (int dx = 0; dx < block; ++dx)
                    for (int c = 0; c < x.shape.c; ++c)
                        out.at(y, xx, (dy * block + dx) * x.shape.c + c) =
                            x.at(y * block + dy, xx * block + dx, c);
    return out;
}

TensorF32 resize_nearest(const TensorF32& x, int scale) {
    if (scale < 1)
        throw ShapeError("ref::resize_nearest: scale must be >= 1");
    TensorF32 out({x.shape.h * scale, x.shape.w * scale, x.shape.c});
    for (int y = 0; y < out.shape.h; ++y)
        for (int xx = 0; xx < out.shape.w; ++xx)
            for (int c = 0; c < x.shape.c; ++c)
                out.at(y, xx, c) = x.at(y / scale, xx / scale, c);
    return out;
}

TensorF32 add_elementwise(const TensorF32& a, const TensorF32& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("ref::add: shape mismatch");
    TensorF32 out(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i)
        out.data[i] = a.data[i] + b.data[i];
    return out;
}

TensorF32 clamp(const TensorF32& a, float lo, float hi) {
    TensorF32 out(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i)
        out.data[i] = std::min(hi, std::max(lo, a.data[i]));
    return out;
}

TensorF32 execute(const Graph& g, const TensorF32& x) {
    validate(g);
    std::map<std::string, TensorF32> values;
    values[g.input_id] = x;
    for (const auto& n : g.nodes) {
        switch (n.kind) {
        case OpKind::Conv2d:
            values[n.id] = ref::conv2d(values.at(n.inputs[0]), n.conv);
            break;
        case OpKind::Add:
            values[n.id] = ref::add_elementwise(values.at(n.inputs[0]), values.at(n.inputs[1]));
            break;
        case OpKind::Concat: {
            const TensorF32& first = values.at(n.inputs[0]);
            int ct = 0;
            for (const auto& r : n.inputs)
                ct += values.at(r).shape.c;
            TensorF32 out({first.shape.h, first.shape.w, ct});
            for (int y = 0; y < out.shape.h; ++y)
                for (int xx = 0; xx < out.shape.w; ++xx) {
                    int off = 0;
                    for (const auto& r : n.inputs) {
                        const TensorF32& p = values.at(r);
                        for (int c = 0; c < p.shape.c; ++c)
                            out.at(y, xx, off + c) = p.at(y, xx, c);
                        off += p.shape.c;
                    }
                }
            values[n.id] = std::move(out);
            break;
        }
        case OpKind::Clip:
            values[n.id] = ref::clamp(values.at(n.inputs[0]), n.clip_lo, n.clip_hi);
            break;
        case OpKind::DepthToSpace:
            values[n.id] = ref::depth_to_space(values.at(n.inputs[0]), n.block);
            break;
        case OpKind::InputRepeat: {
            const TensorF32& src = values.at(n.inputs[0]);
            TensorF32 out({src.shape.h, src.shape.w, src.shape.c * n.times});
            for (int y = 0; y < src.shape.h; ++y)
                for (int xx = 0; xx < src.shape.w; ++xx)
                    for (int t = 0; t < n.times; ++t)
                        for (int c = 0; c < src.shape.c; ++c)
                            out.at(y, xx, t * src.shape.c + c) = src.at(y, xx, c);
            values[n.id] = std::move(out);
            break;
        }
        }
    }
    return values.at(g.output_id);
}

} // namespace srkit::ref
