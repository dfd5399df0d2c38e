#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "srkit/ops.hpp"

namespace srkit {

enum class OpKind { Conv2d, Add, Concat, Clip, DepthToSpace, InputRepeat };

const char* op_kind_name(OpKind k);

// A node of the plain-SR DAG. conv/clip/depth_to_space/input_repeat take
// exactly one input, add exactly two, concat two or more. Inputs reference
// earlier node ids or the graph input id.
struct OpNode {
    std::string id;
    OpKind kind = OpKind::Conv2d;
    std::vector<std::string> inputs;

    ConvSpec conv;           // Conv2d
    float clip_lo = 0.0f;    // Clip
    float clip_hi = 0.0f;
    int block = 1;           // DepthToSpace
    int times = 1;           // InputRepeat
};

// Single-input single-output DAG, stored in topological order. input_id is a
// reserved identifier (not a node) that node inputs use to reference the
// graph's input image; output_id names the node producing the result.
struct Graph {
    std::vector<OpNode> nodes;
    std::string input_id = "input";
    std::string output_id;
    int scale = 3;

    const OpNode* find(const std::string& id) const;
    OpNode* find(const std::string& id);
};

// Output shape of a node for a symbolic h x w input: spatial dims scale by
// integer factors, channel counts are concrete.
struct SymShape {
    int h_factor = 1;
    int w_factor = 1;
    int channels = 0;

    bool operator==(const SymShape&) const = default;
    Shape concrete(int h, int w) const { return {h * h_factor, w * w_factor, channels}; }
};

struct ShapeEntry {
    std::string id;
    SymShape shape;
};
using ShapeTable = std::vector<ShapeEntry>;

// Full structural validation: topological order, unique ids, reachability,
// arity, channel consistency, depth_to_space divisibility, and the final
// output being a 3-channel image scaled by graph.scale. Throws GraphError
// naming the offending node.
ShapeTable validate(const Graph& g);

// Topological evaluation with intermediate buffers released after their last
// consumer. Input must be a 3-channel image tensor.
TensorF32 execute(const Graph& g, const TensorF32& x);

// Same evaluation, invoking `observer` with every node's output before the
// buffer is released (calibration hooks into this).
TensorF32 execute_observed(const Graph& g, const TensorF32& x,
                           const std::function<void(const std::string&, const TensorF32&)>& observer);

// Challenge architectures, inference-time form. Trainable weights use a
// seeded He-style init so builds are reproducible; frozen structural weights
// (anchors) are exact.
Graph build_abpn(int channels = 28, uint64_t seed = 20220801);
Graph build_scsrn_inference(int channels = 32, int body_layers = 7, uint64_t seed = 20220802);
Graph build_ncnet(int channels = 32, int body_layers = 7, uint64_t seed = 20220803);
Graph build_plainnet(int layers = 5, int channels = 32, uint64_t seed = 20220804);
Graph build_dual_branch(int channels = 32, uint64_t seed = 20220805);

Graph build_by_name(const std::string& arch, int channels, int layers, uint64_t seed);

// Frozen 1x1 convolution replicating its input `times` times:
// W[g*c + ch, ch'] = delta(ch, ch'), bias 0. Followed by depth_to_space it
// reproduces nearest-neighbor upsampling bit-exactly.
ConvSpec anchor_conv(int times, int channels);

} // namespace srkit
