#include "srkit/graph.hpp"
#include "srkit/rng.hpp"

#include <algorithm>

namespace srkit {

ConvSpec anchor_conv(int times, int channels) {
    if (times < 1 || channels < 1)
        throw ShapeError("anchor_conv: times and channels must be >= 1");
    ConvSpec s = make_conv(1, channels, times * channels);
    for (int g = 0; g < times; ++g)
        for (int c = 0; c < channels; ++c)
            s.w(g * channels + c, 0, 0, c) = 1.0f;
    return s;
}

namespace {

ConvSpec random_conv(Rng& rng, int kernel, int in_ch, int out_ch, ActivationSpec act) {
    ConvSpec s = make_conv(kernel, in_ch, out_ch, act);
    const int fan_in = kernel * kernel * in_ch;
    for (auto& w : s.weights)
        w = rng.he_uniform(fan_in);
    // biases start at zero
    return s;
}

OpNode conv_node(std::string id, std::string input, ConvSpec spec) {
    OpNode n;
    n.id = std::move(id);
    n.kind = OpKind::Conv2d;
    n.inputs = {std::move(input)};
    n.conv = std::move(spec);
    return n;
}

OpNode clip_node(std::string id, std::string input, float lo, float hi) {
    OpNode n;
    n.id = std::move(id);
    n.kind = OpKind::Clip;
    n.inputs = {std::move(input)};
    n.clip_lo = lo;
    n.clip_hi = hi;
    return n;
}

OpNode d2s_node(std::string id, std::string input, int block) {
    OpNode n;
    n.id = std::move(id);
    n.kind = OpKind::DepthToSpace;
    n.inputs = {std::move(input)};
    n.block = block;
    return n;
}

} // namespace

Graph build_abpn(int channels, uint64_t seed) {
    if (channels < 1)
        throw GraphError("build_abpn: channels must be >= 1");
    Rng rng(seed);
    Graph g;
    g.scale = 3;

    g.nodes.push_back(conv_node("conv1", g.input_id,
                                random_conv(rng, 3, 3, channels, ActivationSpec::relu())));
    for (int i = 2; i <= 5; ++i)
        g.nodes.push_back(conv_node("conv" + std::to_string(i), "conv" + std::to_string(i - 1),
                                    random_conv(rng, 3, channels, channels, ActivationSpec::relu())));
    g.nodes.push_back(conv_node("conv6", "conv5", random_conv(rng, 3, channels, 27, {})));

    OpNode rep;
    rep.id = "anchor";
    rep.kind = OpKind::InputRepeat;
    rep.inputs = {g.input_id};
    rep.times = 9;
    g.nodes.push_back(rep);

    OpNode add;
    add.id = "residual_add";
    add.kind = OpKind::Add;
    add.inputs = {"conv6", "anchor"};
    g.nodes.push_back(add);

    g.nodes.push_back(clip_node("clip", "residual_add", 0.0f, 255.0f));
    g.nodes.push_back(d2s_node("d2s", "clip", 3));
    g.output_id = "d2s";
    return g;
}

Graph build_scsrn_inference(int channels, int body_layers, uint64_t seed) {
    if (channels < 1 || body_layers < 2)
        throw GraphError("build_scsrn_inference: need channels >= 1 and body_layers >= 2");
    Rng rng(seed);
    Graph g;
    g.scale = 3;

    g.nodes.push_back(conv_node("stem", g.input_id,
                                random_conv(rng, 3, 3, channels, ActivationSpec::relu())));
    // the concatenation skip joins the input image back in after the middle
    // body layer; body convs are the collapsed single-conv Rep_Block form
    const int skip_after = body_layers / 2;
    std::string prev = "stem";
    for (int i = 1; i <= body_layers; ++i) {
        const std::string id = "body" + std::to_string(i);
        const int in_ch = (i == skip_after + 1) ? channels + 3 : channels;
        g.nodes.push_back(conv_node(id, prev,
                                    random_conv(rng, 3, in_ch, channels, ActivationSpec::relu())));
        if (i == skip_after) {
            OpNode cat;
            cat.id = "skip_concat";
            cat.kind = OpKind::Concat;
            cat.inputs = {g.input_id, id};
            g.nodes.push_back(cat);
            prev = "skip_concat";
        } else {
            prev = id;
        }
    }
    g.nodes.push_back(conv_node("head", prev, random_conv(rng, 3, channels, 27, {})));
    g.nodes.push_back(clip_node("clip", "head", 0.0f, 255.0f));
    g.nodes.push_back(d2s_node("d2s", "clip", 3));
    g.output_id = "d2s";
    return g;
}

Graph build_ncnet(int channels, int body_layers, uint64_t seed) {
    if (channels < 1 || body_layers < 2)
        throw GraphError("build_ncnet: need channels >= 1 and body_layers >= 2");
    Rng rng(seed);
    Graph g;
    g.scale = 3;

    std::string prev = g.input_id;
    for (int i = 1; i < body_layers; ++i) {
        const std::string id = "conv" + std::to_string(i);
        const int in_ch = (i == 1) ? 3 : channels;
        g.nodes.push_back(conv_node(id, prev,
                                    random_conv(rng, 3, in_ch, channels, ActivationSpec::relu())));
        prev = id;
    }
    g.nodes.push_back(conv_node("conv" + std::to_string(body_layers), prev,
                                random_conv(rng, 3, channels, 27, {})));

    // nearest-replication branch: frozen 1x1, nine stacked 3x3 identities
    g.nodes.push_back(conv_node("nearest_conv", g.input_id, anchor_conv(9, 3)));

    OpNode add;
    add.id = "branch_add";
    add.kind = OpKind::Add;
    add.inputs = {"conv" + std::to_string(body_layers), "nearest_conv"};
    g.nodes.push_back(add);

    g.nodes.push_back(clip_node("clip", "branch_add", 0.0f, 255.0f));
    g.nodes.push_back(d2s_node("d2s", "clip", 3));
    g.output_id = "d2s";
    return g;
}

Graph build_plainnet(int layers, int channels, uint64_t seed) {
    if (layers < 2 || channels < 1)
        throw GraphError("build_plainnet: need layers >= 2 and channels >= 1");
    Rng rng(seed);
    Graph g;
    g.scale = 3;

    std::string prev = g.input_id;
    for (int i = 1; i < layers; ++i) {
        const std::string id = "conv" + std::to_string(i);
        const int in_ch = (i == 1) ? 3 : channels;
        g.nodes.push_back(conv_node(id, prev,
                                    random_conv(rng, 3, in_ch, channels, ActivationSpec::relu())));
        prev = id;
    }
    g.nodes.push_back(conv_node("conv" + std::to_string(layers), prev,
                                random_conv(rng, 3, channels, 27, {})));
    g.nodes.push_back(clip_node("clip", "conv" + std::to_string(layers), 0.0f, 255.0f));
    g.nodes.push_back(d2s_node("d2s", "clip", 3));
    g.output_id = "d2s";
    return g;
}

Graph build_dual_branch(int channels, uint64_t seed) {
    if (channels < 1)
        throw GraphError("build_dual_branch: channels must be >= 1");
    Rng rng(seed);
    Graph g;
    g.scale = 3;

    g.nodes.push_back(conv_node("stem", g.input_id,
                                random_conv(rng, 3, 3, channels, ActivationSpec::relu())));
    g.nodes.push_back(conv_node("left1", "stem",
                                random_conv(rng, 3, channels, channels, ActivationSpec::relu())));
    g.nodes.push_back(conv_node("left2", "left1",
                                random_conv(rng, 3, channels, channels, ActivationSpec::relu())));
    g.nodes.push_back(conv_node("right1", "stem",
                                random_conv(rng, 3, channels, channels, ActivationSpec::relu())));
    // the second branch ends without an activation
    g.nodes.push_back(conv_node("right2", "right1",
                                random_conv(rng, 3, channels, channels, {})));

    OpNode add;
    add.id = "merge_add";
    add.kind = OpKind::Add;
    add.inputs = {"left2", "right2"};
    g.nodes.push_back(add);

    g.nodes.push_back(conv_node("head", "merge_add", random_conv(rng, 3, channels, 27, {})));
    g.nodes.push_back(clip_node("clip", "head", 0.0f, 255.0f));
    g.nodes.push_back(d2s_node("d2s", "clip", 3));
    g.output_id = "d2s";
    return g;
}

Graph build_by_name(const std::string& arch, int channels, int layers, uint64_t seed) {
    if (arch == "abpn")
        return build_abpn(channels > 0 ? channels : 28, seed);
    if (arch == "scsrn")
        return build_scsrn_inference(channels > 0 ? channels : 32, layers > 0 ? layers : 7, seed);
    if (arch == "ncnet")
        return build_ncnet(channels > 0 ? channels : 32, layers > 0 ? layers : 7, seed);
    if (arch == "plainnet")
        return build_plainnet(layers > 0 ? layers : 5, channels > 0 ? channels : 32, seed);
    if (arch == "dual-branch")
        return build_dual_branch(channels > 0 ? channels : 32, seed);
    throw GraphError("unknown architecture '" + arch +
                     "' (expected abpn, scsrn, ncnet, plainnet or dual-branch)");
}

} // namespace srkit
