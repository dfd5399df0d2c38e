#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "srkit/graph.hpp"
#include "srkit/metrics.hpp"
#include "srkit/tensor.hpp"

namespace srkit {

// Per-edge value ranges observed over a calibration set, keyed by producing
// node id (plus the graph input id). Ranges always cover 0 so the zero point
// is representable. Clip node ranges are pinned to the clip bounds: a
// clip(0,255) edge quantizes to scale 1, zero point -128, making the INT8
// output losslessly convertible to 8-bit pixels.
struct CalibrationRange {
    std::map<std::string, std::pair<double, double>> ranges;
};

enum class WeightScheme { PerTensor, PerChannel };

// value = mantissa * 2^-shift, |mantissa| < 2^31
struct FixedPointMultiplier {
    int32_t mantissa = 0;
    int shift = 0;

    bool operator==(const FixedPointMultiplier&) const = default;
};

FixedPointMultiplier quantize_multiplier(double m);

// Fixed-point requantization with round-half-even, the one tie rule used
// everywhere. acc * mantissa is exact in 64 bits for any int32 accumulator.
int64_t rhe_shift_right(int64_t v, int shift);
int32_t requantize(int64_t acc, FixedPointMultiplier m);

// Symmetric int8 weights (zero_point = 0), int32 bias at scale
// input_scale * weight_scale, and the per-channel (or single) requantization
// multiplier input_scale * weight_scale / output_scale.
struct QuantizedConvSpec {
    int kernel = 1;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<int8_t> weights; // OHWI, same layout as ConvSpec
    std::vector<double> weight_scales; // one entry, or out_channels entries
    std::vector<int32_t> bias;
    QuantParams input;
    QuantParams output;
    std::vector<FixedPointMultiplier> multipliers; // parallel to weight_scales
    ActivationSpec activation;

    double weight_scale(int o) const {
        return weight_scales.size() == 1 ? weight_scales[0] : weight_scales[size_t(o)];
    }
    FixedPointMultiplier multiplier(int o) const {
        return multipliers.size() == 1 ? multipliers[0] : multipliers[size_t(o)];
    }
    int8_t w(int o, int u, int v, int i) const {
        return weights[size_t(((int64_t(o) * kernel + u) * kernel + v) * in_channels + i)];
    }
};

// Mirror of Graph over int8: the float structure plus per-conv quantized
// payloads, per-edge QuantParams and per-operand rescale multipliers for
// add/concat/clip nodes. Producer and consumer always see the same edge
// params by construction.
struct QuantizedGraph {
    Graph structure;
    std::map<std::string, QuantizedConvSpec> convs;
    std::map<std::string, QuantParams> edges; // node id (or input id) -> output params
    std::map<std::string, std::vector<FixedPointMultiplier>> rescales;
    WeightScheme scheme = WeightScheme::PerChannel;

    QuantParams input_params() const { return edges.at(structure.input_id); }
    QuantParams output_params() const { return edges.at(structure.output_id); }
};

QuantParams params_from_range(double mn, double mx);

CalibrationRange calibrate(const Graph& g, std::span<const TensorF32> images);

QuantizedConvSpec quantize_weights(const ConvSpec& spec, WeightScheme mode,
                                   QuantParams input, QuantParams output);

QuantizedGraph quantize_graph(const Graph& g, const CalibrationRange& calib, WeightScheme mode);

// Integer-only evaluation: int32 accumulation (carried in 64-bit arithmetic,
// the int32 contract checked when check_overflow is set), fixed-point
// requantization, activations as integer clamps, operand rescale for
// add/concat. Bit-deterministic for every worker-thread count.
TensorI8 execute_int8(const QuantizedGraph& qg, const TensorI8& x, bool check_overflow = false);

struct PsnrDrop {
    double psnr_f32 = 0.0;
    double psnr_int8 = 0.0;
    double delta = 0.0;
};

// Mean PSNR of the float and int8 paths against ground truth over (lr, hr)
// pairs; delta = psnr_f32 - psnr_int8.
PsnrDrop measure_psnr_drop(const Graph& g, const QuantizedGraph& qg,
                           std::span<const std::pair<ImageU8, ImageU8>> pairs);

} // namespace srkit
