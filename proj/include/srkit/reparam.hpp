#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srkit/graph.hpp"

namespace srkit {

// What a rewrite did to a graph: which passes fired on which nodes, how the
// node count moved, and the measured output divergence on probe inputs.
// Algebraic fusions are exact up to float accumulation order; permutation
// rewrites (clip/depth_to_space reorder, anchor replacement) are bit-exact.
struct RewriteReport {
    std::vector<std::pair<std::string, std::vector<std::string>>> passes_applied;
    int node_count_before = 0;
    int node_count_after = 0;
    double max_abs_divergence = 0.0;
    double max_rel_divergence = 0.0;
    std::vector<std::string> left_intact; // add/concat structures the algebra could not remove

    std::string to_json() const;
};

// --- ConvSpec-level fusions -------------------------------------------------

// k x k conv followed by a 1x1 conv, no activation in between. Exact for all
// inputs: the 1x1 needs no padding.
ConvSpec fuse_conv_then_1x1(const ConvSpec& c1, const ConvSpec& c2);

// 1x1 conv followed by a k x k conv. For k > 1 the first bias must be zero:
// the expanded net pads the intermediate map with zeros while the fused net
// pads the input, and a nonzero first bias breaks equality at the border.
ConvSpec fuse_1x1_then_conv(const ConvSpec& c1, const ConvSpec& c2);

// Parallel branches with identical in/out channels and no activations are
// summed after zero-padding smaller kernels to the largest one.
ConvSpec merge_parallel_branches(std::span<const ConvSpec> specs);

// Absorbs a residual add into the conv: adds 1 to the kernel center of each
// channel's own diagonal. Requires in == out channels and no activation.
ConvSpec skip_to_identity_conv(const ConvSpec& c);

// anchor_conv(times, channels) in graph.hpp builds the frozen 1x1 spec the
// input_repeat rewrite uses.

// --- Graph-level passes -----------------------------------------------------

// Replaces every input_repeat node by the equivalent frozen 1x1 conv.
Graph rewrite_anchor_to_conv(const Graph& g, RewriteReport* report = nullptr);

// Rewrites depth_to_space -> clip into clip -> depth_to_space. Bit-exact:
// clip is elementwise and depth_to_space a permutation. No-op (reported) if
// the pattern is absent.
Graph reorder_clip_before_d2s(const Graph& g, RewriteReport* report = nullptr);

// Rewrites concat(a, b) -> 1x1 conv into add(conv_a(a), conv_b(b)) with the
// 1x1 weights split by input channel range; the bias goes to the first
// summand only. Exact up to accumulation order.
Graph concat_conv_to_sum(const Graph& g, RewriteReport* report = nullptr);

// Applies all passes to a fixed point. The result is a plain chain wherever
// the algebra allows; remaining add/concat structures are listed in the
// report. Node count never increases; a second application changes nothing.
std::pair<Graph, RewriteReport> collapse_graph(const Graph& g);

// --- Divergence probes ------------------------------------------------------

double max_abs_divergence(const TensorF32& a, const TensorF32& b);
// |a-b| / max(1, |a|, |b|) per element, maximized
double max_rel_divergence(const TensorF32& a, const TensorF32& b);

// Border-exciting probes: corner deltas plus seeded uniform noise in [0,255].
std::vector<TensorF32> probe_inputs(int h, int w, int count, uint64_t seed);

} // namespace srkit
