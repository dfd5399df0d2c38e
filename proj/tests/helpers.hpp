#pragma once

#include <cstring>

#include "srkit/graph.hpp"
#include "srkit/rng.hpp"
#include "srkit/tensor.hpp"

namespace srkit::test {

inline TensorF32 random_tensor(Shape s, Rng& rng, double lo = 0.0, double hi = 255.0) {
    TensorF32 t(s);
    for (auto& v : t.data)
        v = float(rng.uniform(lo, hi));
    return t;
}

inline TensorF32 random_image(int h, int w, Rng& rng) {
    return random_tensor({h, w, 3}, rng);
}

inline ConvSpec random_convspec(Rng& rng, int kernel, int in_ch, int out_ch,
                                ActivationSpec act = ActivationSpec::none(),
                                bool with_bias = true) {
    ConvSpec s = make_conv(kernel, in_ch, out_ch, act);
    for (auto& w : s.weights)
        w = float(rng.uniform(-1.0, 1.0));
    if (with_bias)
        for (auto& b : s.bias)
            b = float(rng.uniform(-2.0, 2.0));
    return s;
}

inline bool bits_equal(const TensorF32& a, const TensorF32& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

inline bool conv_specs_equal(const ConvSpec& a, const ConvSpec& b) {
    return a.kernel == b.kernel && a.in_channels == b.in_channels &&
           a.out_channels == b.out_channels && a.activation == b.activation &&
           a.weights.size() == b.weights.size() && a.bias.size() == b.bias.size() &&
           std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(float)) == 0 &&
           std::memcmp(a.bias.data(), b.bias.data(), a.bias.size() * sizeof(float)) == 0;
}

inline bool graphs_equal(const Graph& a, const Graph& b) {
    if (a.nodes.size() != b.nodes.size() || a.input_id != b.input_id ||
        a.output_id != b.output_id || a.scale != b.scale)
        return false;
    for (size_t i = 0; i < a.nodes.size(); ++i) {
        const OpNode& x = a.nodes[i];
        const OpNode& y = b.nodes[i];
        if (x.id != y.id || x.kind != y.kind || x.inputs != y.inputs)
            return false;
        switch (x.kind) {
        case OpKind::Conv2d:
            if (!conv_specs_equal(x.conv, y.conv))
                return false;
            break;
        case OpKind::Clip:
            if (x.clip_lo != y.clip_lo || x.clip_hi != y.clip_hi)
                return false;
            break;
        case OpKind::DepthToSpace:
            if (x.block != y.block)
                return false;
            break;
        case OpKind::InputRepeat:
            if (x.times != y.times)
                return false;
            break;
        default:
            break;
        }
    }
    return true;
}

} // namespace srkit::test
