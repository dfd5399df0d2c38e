#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "srkit/quant.hpp"

namespace srkit {

namespace {

struct QBounds {
    int lo = -128;
    int hi = 127;
};

QBounds activation_bounds(const ActivationSpec& act, QuantParams out) {
    QBounds b;
    if (act.kind == Activation::Relu) {
        b.lo = std::max(b.lo, out.zero_point); // real 0 maps to the zero point
    } else if (act.kind == Activation::Clip) {
        b.lo = std::max<int>(b.lo, out.zero_point + int(round_half_even(act.lo / out.scale)));
        b.hi = std::min<int>(b.hi, out.zero_point + int(round_half_even(act.hi / out.scale)));
    }
    return b;
}

int8_t saturate(int v, QBounds b) {
    return int8_t(std::min(b.hi, std::max(b.lo, v)));
}

TensorI8 conv_int8(const TensorI8& x, const QuantizedConvSpec& spec, bool checked,
                   const std::string& node_id) {
    if (x.shape.c != spec.in_channels)
        throw ShapeError("conv_int8: channel mismatch");
    const int h = x.shape.h, w = x.shape.w;
    const int k = spec.kernel, pad = (k - 1) / 2;
    const int cin = spec.in_channels, cout = spec.out_channels;
    const int z_in = spec.input.zero_point;
    const int z_out = spec.output.zero_point;
    const QBounds bounds = activation_bounds(spec.activation, spec.output);

    TensorI8 out({h, w, cout}, spec.output);
    bool overflow = false;

#pragma omp parallel for schedule(static) reduction(|| : overflow)
    for (int y = 0; y < h; ++y) {
        std::vector<int64_t> acc(static_cast<size_t>(cout));
        const int u0 = std::max(0, pad - y);
        const int u1 = std::min(k, h + pad - y);
        for (int xx = 0; xx < w; ++xx) {
            const int v0 = std::max(0, pad - xx);
            const int v1 = std::min(k, w + pad - xx);
            for (int o = 0; o < cout; ++o)
                acc[size_t(o)] = spec.bias[size_t(o)];
            // skipped taps read zero-padding, whose quantized value is the
            // input zero point and contributes (z_in - z_in) * w = 0
            for (int u = u0; u < u1; ++u) {
                const int8_t* xrow =
                    &x.data[size_t((int64_t(y + u - pad) * w + (xx + v0 - pad)) * cin)];
                for (int v = v0; v < v1; ++v) {
                    for (int o = 0; o < cout; ++o) {
                        const int8_t* wp = &spec.weights[size_t(((int64_t(o) * k + u) * k + v) * cin)];
                        int64_t s = acc[size_t(o)];
                        for (int i = 0; i < cin; ++i)
                            s += int64_t(int(xrow[i]) - z_in) * int(wp[i]);
                        acc[size_t(o)] = s;
                        if (checked && (s > INT32_MAX || s < INT32_MIN))
                            overflow = true;
                    }
                    xrow += cin;
                }
            }
            int8_t* op = &out.data[size_t((int64_t(y) * w + xx) * cout)];
            for (int o = 0; o < cout; ++o)
                op[o] = saturate(requantize(acc[size_t(o)], spec.multiplier(o)) + z_out, bounds);
        }
    }
    if (overflow)
        throw QuantError("node '" + node_id + "': int32 accumulator overflow");
    return out;
}

TensorI8 add_int8(const TensorI8& a, const TensorI8& b, FixedPointMultiplier ma,
                  FixedPointMultiplier mb, QuantParams out_p) {
    if (!(a.shape == b.shape))
        throw ShapeError("add_int8: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    TensorI8 out(a.shape, out_p);
    const int za = a.qp.zero_point, zb = b.qp.zero_point, zo = out_p.zero_point;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(a.data.size()); ++i) {
        const int va = requantize(int(a.data[size_t(i)]) - za, ma);
        const int vb = requantize(int(b.data[size_t(i)]) - zb, mb);
        out.data[size_t(i)] = saturate(va + vb + zo, {});
    }
    return out;
}

TensorI8 concat_int8(const std::vector<const TensorI8*>& parts,
                     const std::vector<FixedPointMultiplier>& ms, QuantParams out_p) {
    const int h = parts[0]->shape.h, w = parts[0]->shape.w;
    int ct = 0;
    for (const auto* p : parts) {
        if (p->shape.h != h || p->shape.w != w)
            throw ShapeError("concat_int8: spatial mismatch");
        ct += p->shape.c;
    }
    TensorI8 out({h, w, ct}, out_p);
    const int zo = out_p.zero_point;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int8_t* dst = &out.data[size_t((int64_t(y) * w + x) * ct)];
            for (size_t pi = 0; pi < parts.size(); ++pi) {
                const TensorI8& p = *parts[pi];
                const int zp = p.qp.zero_point;
                const int8_t* src = &p.data[size_t((int64_t(y) * w + x) * p.shape.c)];
                for (int c = 0; c < p.shape.c; ++c)
                    *dst++ = saturate(requantize(int(src[c]) - zp, ms[pi]) + zo, {});
            }
        }
    }
    return out;
}

TensorI8 clip_int8(const TensorI8& x, FixedPointMultiplier m, QuantParams out_p, float lo, float hi) {
    TensorI8 out(x.shape, out_p);
    const int zi = x.qp.zero_point, zo = out_p.zero_point;
    const QBounds bounds = activation_bounds(ActivationSpec::clip(lo, hi), out_p);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(x.data.size()); ++i)
        out.data[size_t(i)] =
            saturate(requantize(int(x.data[size_t(i)]) - zi, m) + zo, bounds);
    return out;
}

TensorI8 d2s_int8(const TensorI8& x, int block) {
    if (block < 1 || x.shape.c % (block * block) != 0)
        throw ShapeError("d2s_int8: bad block");
    const int h = x.shape.h, w = x.shape.w;
    const int cout = x.shape.c / (block * block);
    TensorI8 out({h * block, w * block, cout}, x.qp);
#pragma omp parallel for schedule(static)
    for (int Y = 0; Y < h * block; ++Y) {
        const int y = Y / block, dy = Y % block;
        for (int X = 0; X < w * block; ++X) {
            const int xq = X / block, dx = X % block;
            const int g = dy * block + dx;
            const int8_t* src = &x.data[size_t((int64_t(y) * w + xq) * x.shape.c + g * cout)];
            std::copy(src, src + cout, &out.data[size_t((int64_t(Y) * (w * block) + X) * cout)]);
        }
    }
    return out;
}

TensorI8 repeat_int8(const TensorI8& x, int times) {
    TensorI8 out({x.shape.h, x.shape.w, x.shape.c * times}, x.qp);
    const int c = x.shape.c;
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < int64_t(x.shape.h) * x.shape.w; ++p) {
        const int8_t* src = &x.data[size_t(p * c)];
        int8_t* dst = &out.data[size_t(p * c * times)];
        for (int t = 0; t < times; ++t)
            dst = std::copy(src, src + c, dst);
    }
    return out;
}

} // namespace

TensorI8 execute_int8(const QuantizedGraph& qg, const TensorI8& x, bool check_overflow) {
    const Graph& g = qg.structure;
    validate(g);
    if (!(x.qp == qg.input_params()))
        throw QuantError("execute_int8: input params (scale " + std::to_string(x.qp.scale) +
                         ", zp " + std::to_string(x.qp.zero_point) +
                         ") do not match the graph input edge");

    std::unordered_map<std::string, int> uses;
    for (const auto& n : g.nodes)
        for (const auto& ref : n.inputs)
            ++uses[ref];
    ++uses[g.output_id];

    struct Slot {
        TensorI8 value;
        int remaining = 0;
    };
    std::unordered_map<std::string, Slot> slots;
    slots[g.input_id] = {x, uses[g.input_id]};

    for (const auto& n : g.nodes) {
        std::vector<const TensorI8*> in;
        in.reserve(n.inputs.size());
        for (const auto& ref : n.inputs)
            in.push_back(&slots.at(ref).value);

        TensorI8 out;
        switch (n.kind) {
        case OpKind::Conv2d:
            out = conv_int8(*in[0], qg.convs.at(n.id), check_overflow, n.id);
            break;
        case OpKind::Add: {
            const auto& ms = qg.rescales.at(n.id);
            out = add_int8(*in[0], *in[1], ms[0], ms[1], qg.edges.at(n.id));
            break;
        }
        case OpKind::Concat:
            out = concat_int8(in, qg.rescales.at(n.id), qg.edges.at(n.id));
            break;
        case OpKind::Clip:
            out = clip_int8(*in[0], qg.rescales.at(n.id)[0], qg.edges.at(n.id), n.clip_lo, n.clip_hi);
            break;
        case OpKind::DepthToSpace:
            out = d2s_int8(*in[0], n.block);
            break;
        case OpKind::InputRepeat:
            out = repeat_int8(*in[0], n.times);
            break;
        }

        for (const auto& ref : n.inputs) {
            Slot& s = slots.at(ref);
            if (--s.remaining == 0)
                slots.erase(ref);
        }
        slots[n.id] = {std::move(out), uses[n.id]};
    }
    return std::move(slots.at(g.output_id).value);
}

PsnrDrop measure_psnr_drop(const Graph& g, const QuantizedGraph& qg,
                           std::span<const std::pair<ImageU8, ImageU8>> pairs) {
    if (pairs.empty())
        throw IoError("measure_psnr_drop: no image pairs");
    PsnrDrop d;
    for (const auto& [lr, hr] : pairs) {
        const TensorF32 t = image_to_tensor(lr);
        d.psnr_f32 += psnr(tensor_to_image(execute(g, t)), hr);
        const TensorI8 tq = quantize(t, qg.input_params());
        d.psnr_int8 += psnr(tensor_to_image(dequantize(execute_int8(qg, tq))), hr);
    }
    d.psnr_f32 /= double(pairs.size());
    d.psnr_int8 /= double(pairs.size());
    d.delta = d.psnr_f32 - d.psnr_int8;
    return d;
}

} // namespace srkit
