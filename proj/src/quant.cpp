#include "srkit/quant.hpp"

#include <algorithm>
#include <cmath>

namespace srkit {

FixedPointMultiplier quantize_multiplier(double m) {
    if (m < 0.0)
        throw QuantError("quantize_multiplier: negative multiplier");
    if (m == 0.0)
        return {0, 0};
    int exp = 0;
    const double frac = std::frexp(m, &exp); // m = frac * 2^exp, frac in [0.5, 1)
    auto mant = int64_t(round_half_even(frac * double(int64_t(1) << 31)));
    if (mant == (int64_t(1) << 31)) { // frac rounded up to 1.0
        mant >>= 1;
        ++exp;
    }
    return {int32_t(mant), 31 - exp};
}

int64_t rhe_shift_right(int64_t v, int shift) {
    if (shift <= 0)
        return v << (-shift);
    if (shift > 62)
        return 0;
    const int64_t q = v >> shift; // arithmetic shift: floor division
    const int64_t r = v - (q << shift);
    const int64_t half = int64_t(1) << (shift - 1);
    return q + ((r > half || (r == half && (q & 1))) ? 1 : 0);
}

int32_t requantize(int64_t acc, FixedPointMultiplier m) {
    const int64_t prod = acc * int64_t(m.mantissa);
    const int64_t v = rhe_shift_right(prod, m.shift);
    return int32_t(std::min<int64_t>(INT32_MAX, std::max<int64_t>(INT32_MIN, v)));
}

QuantParams params_from_range(double mn, double mx) {
    mn = std::min(mn, 0.0); // range covers 0
    mx = std::max(mx, 0.0);
    double scale = (mx - mn) / 255.0;
    if (scale <= 0.0)
        scale = 1.0; // degenerate all-zero range
    int zp = int(round_half_even(-128.0 - mn / scale));
    zp = std::clamp(zp, -128, 127);
    return {scale, zp};
}

CalibrationRange calibrate(const Graph& g, std::span<const TensorF32> images) {
    if (images.empty())
        throw QuantError("calibrate: empty calibration set");
    validate(g);

    CalibrationRange cal;
    auto update = [&cal](const std::string& id, const TensorF32& t) {
        auto [it, fresh] = cal.ranges.try_emplace(id, 0.0, 0.0);
        double mn = fresh ? double(t.data[0]) : it->second.first;
        double mx = fresh ? double(t.data[0]) : it->second.second;
        for (float v : t.data) {
            mn = std::min(mn, double(v));
            mx = std::max(mx, double(v));
        }
        it->second = {mn, mx};
    };

    for (const auto& img : images) {
        update(g.input_id, img);
        execute_observed(g, img, update);
    }

    for (auto& [id, range] : cal.ranges) {
        // clip bounds are hard guarantees; pin the edge to them so the output
        // normalization is exact regardless of calibration data
        if (const OpNode* n = g.find(id); n && n->kind == OpKind::Clip)
            range = {double(n->clip_lo), double(n->clip_hi)};
        range.first = std::min(range.first, 0.0);
        range.second = std::max(range.second, 0.0);
    }
    return cal;
}

QuantizedConvSpec quantize_weights(const ConvSpec& spec, WeightScheme mode,
                                   QuantParams input, QuantParams output) {
    spec.check();
    QuantizedConvSpec q;
    q.kernel = spec.kernel;
    q.in_channels = spec.in_channels;
    q.out_channels = spec.out_channels;
    q.input = input;
    q.output = output;
    q.activation = spec.activation;

    const int64_t per_out = int64_t(spec.kernel) * spec.kernel * spec.in_channels;
    if (mode == WeightScheme::PerTensor) {
        double amax = 0.0;
        for (float w : spec.weights)
            amax = std::max(amax, std::fabs(double(w)));
        q.weight_scales = {amax > 0.0 ? amax / 127.0 : 1.0};
    } else {
        q.weight_scales.resize(size_t(spec.out_channels));
        for (int o = 0; o < spec.out_channels; ++o) {
            double amax = 0.0;
            for (int64_t j = 0; j < per_out; ++j)
                amax = std::max(amax, std::fabs(double(spec.weights[size_t(o * per_out + j)])));
            q.weight_scales[size_t(o)] = amax > 0.0 ? amax / 127.0 : 1.0; // all-zero channel
        }
    }

    q.weights.resize(spec.weights.size());
    for (int o = 0; o < spec.out_channels; ++o) {
        const double s = q.weight_scale(o);
        for (int64_t j = 0; j < per_out; ++j) {
            const double v = round_half_even(double(spec.weights[size_t(o * per_out + j)]) / s);
            q.weights[size_t(o * per_out + j)] = int8_t(std::min(127.0, std::max(-127.0, v)));
        }
    }

    q.bias.resize(size_t(spec.out_channels));
    q.multipliers.resize(q.weight_scales.size());
    for (size_t j = 0; j < q.weight_scales.size(); ++j)
        q.multipliers[j] = quantize_multiplier(input.scale * q.weight_scales[j] / output.scale);
    for (int o = 0; o < spec.out_channels; ++o) {
        const double bs = input.scale * q.weight_scale(o);
        const double b = round_half_even(double(spec.bias[size_t(o)]) / bs);
        q.bias[size_t(o)] =
            int32_t(std::min(double(INT32_MAX), std::max(double(INT32_MIN), b)));
    }
    return q;
}

QuantizedGraph quantize_graph(const Graph& g, const CalibrationRange& calib, WeightScheme mode) {
    validate(g);
    QuantizedGraph qg;
    qg.structure = g;
    qg.scheme = mode;

    auto range_of = [&calib](const std::string& id) {
        auto it = calib.ranges.find(id);
        if (it == calib.ranges.end())
            throw QuantError("quantize_graph: no calibration range for edge '" + id + "'");
        return it->second;
    };

    qg.edges[g.input_id] = params_from_range(range_of(g.input_id).first, range_of(g.input_id).second);

    for (const auto& n : g.nodes) {
        switch (n.kind) {
        case OpKind::DepthToSpace:
        case OpKind::InputRepeat:
            // pure data movement: output edge shares the input edge params
            qg.edges[n.id] = qg.edges.at(n.inputs[0]);
            break;
        case OpKind::Conv2d: {
            auto [mn, mx] = range_of(n.id);
            qg.edges[n.id] = params_from_range(mn, mx);
            qg.convs[n.id] =
                quantize_weights(n.conv, mode, qg.edges.at(n.inputs[0]), qg.edges.at(n.id));
            break;
        }
        case OpKind::Add:
        case OpKind::Concat: {
            auto [mn, mx] = range_of(n.id);
            const QuantParams out = params_from_range(mn, mx);
            qg.edges[n.id] = out;
            std::vector<FixedPointMultiplier> ms;
            for (const auto& ref : n.inputs)
                ms.push_back(quantize_multiplier(qg.edges.at(ref).scale / out.scale));
            qg.rescales[n.id] = std::move(ms);
            break;
        }
        case OpKind::Clip: {
            auto [mn, mx] = range_of(n.id);
            const QuantParams out = params_from_range(mn, mx);
            qg.edges[n.id] = out;
            qg.rescales[n.id] = {quantize_multiplier(qg.edges.at(n.inputs[0]).scale / out.scale)};
            break;
        }
        }
    }
    return qg;
}

} // namespace srkit
