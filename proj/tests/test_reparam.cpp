#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "srkit/graph.hpp"
#include "srkit/reparam.hpp"

using namespace srkit;
using test::random_convspec;
using test::random_tensor;

namespace {

// border-exciting probes for arbitrary channel counts
std::vector<TensorF32> probes_c(int h, int w, int c, int count, uint64_t seed) {
    std::vector<TensorF32> out;
    const int corners[4][2] = {{0, 0}, {0, w - 1}, {h - 1, 0}, {h - 1, w - 1}};
    for (int k = 0; k < std::min(4, count); ++k) {
        TensorF32 t({h, w, c});
        for (int ch = 0; ch < c; ++ch)
            t.at(corners[k][0], corners[k][1], ch) = 1.0f;
        out.push_back(std::move(t));
    }
    Rng rng(seed);
    while (int(out.size()) < count)
        out.push_back(random_tensor({h, w, c}, rng, -1.0, 1.0));
    return out;
}

ConvSpec identity_1x1(int channels) {
    ConvSpec s = make_conv(1, channels, channels);
    for (int c = 0; c < channels; ++c)
        s.w(c, 0, 0, c) = 1.0f;
    return s;
}

OpNode make_node(std::string id, OpKind kind, std::vector<std::string> inputs) {
    OpNode n;
    n.id = std::move(id);
    n.kind = kind;
    n.inputs = std::move(inputs);
    return n;
}

OpNode make_conv_node(std::string id, std::string input, ConvSpec spec) {
    OpNode n = make_node(std::move(id), OpKind::Conv2d, {std::move(input)});
    n.conv = std::move(spec);
    return n;
}

} // namespace

TEST_CASE("fuse_conv_then_1x1: identity projection returns the first conv") {
    Rng rng(51);
    const ConvSpec c1 = random_convspec(rng, 3, 3, 5);
    const ConvSpec fused = fuse_conv_then_1x1(c1, identity_1x1(5));
    REQUIRE(fused.kernel == 3);
    for (size_t i = 0; i < c1.weights.size(); ++i)
        CHECK(fused.weights[i] == doctest::Approx(c1.weights[i]).epsilon(1e-7));
    for (size_t i = 0; i < c1.bias.size(); ++i)
        CHECK(fused.bias[i] == doctest::Approx(c1.bias[i]).epsilon(1e-7));
}

TEST_CASE("fuse_conv_then_1x1: single-channel scalar algebra") {
    Rng rng(52);
    ConvSpec c1 = random_convspec(rng, 3, 1, 1);
    c1.bias[0] = 0.75f;
    ConvSpec c2 = make_conv(1, 1, 1);
    c2.w(0, 0, 0, 0) = 2.0f;
    c2.bias[0] = 1.0f;

    const ConvSpec fused = fuse_conv_then_1x1(c1, c2);
    for (size_t i = 0; i < c1.weights.size(); ++i)
        CHECK(fused.weights[i] == 2.0f * c1.weights[i]);
    CHECK(fused.bias[0] == 2.0f * 0.75f + 1.0f);
}

TEST_CASE("fuse_conv_then_1x1: fused equals two-step on random inputs") {
    Rng rng(53);
    for (int trial = 0; trial < 10; ++trial) {
        const ConvSpec c1 = random_convspec(rng, 3, 4, 6);
        const ConvSpec c2 = random_convspec(rng, 1, 6, 3);
        const ConvSpec fused = fuse_conv_then_1x1(c1, c2);
        for (const auto& x : probes_c(6, 5, 4, 5, 1000 + uint64_t(trial))) {
            const TensorF32 two_step = conv2d(conv2d(x, c1), c2);
            const TensorF32 one_step = conv2d(x, fused);
            CHECK(max_rel_divergence(two_step, one_step) <= 1e-4);
        }
    }
}

TEST_CASE("fuse_conv_then_1x1: refuses a mid-activation") {
    Rng rng(54);
    const ConvSpec c1 = random_convspec(rng, 3, 3, 4, ActivationSpec::relu());
    const ConvSpec c2 = random_convspec(rng, 1, 4, 2);
    CHECK_THROWS_AS((void)fuse_conv_then_1x1(c1, c2), ShapeError);
}

TEST_CASE("fuse_1x1_then_conv: identity expansion returns the second conv") {
    Rng rng(55);
    const ConvSpec c2 = random_convspec(rng, 3, 5, 4);
    const ConvSpec fused = fuse_1x1_then_conv(identity_1x1(5), c2);
    for (size_t i = 0; i < c2.weights.size(); ++i)
        CHECK(fused.weights[i] == doctest::Approx(c2.weights[i]).epsilon(1e-7));
    CHECK(fused.bias == c2.bias);
}

TEST_CASE("fuse_1x1_then_conv: zero-bias expansion matches two-step including borders") {
    Rng rng(56);
    for (int trial = 0; trial < 10; ++trial) {
        const ConvSpec c1 = random_convspec(rng, 1, 3, 8, ActivationSpec::none(), /*with_bias=*/false);
        const ConvSpec c2 = random_convspec(rng, 3, 8, 3);
        const ConvSpec fused = fuse_1x1_then_conv(c1, c2);
        for (const auto& x : probes_c(5, 6, 3, 5, 2000 + uint64_t(trial))) {
            const TensorF32 two_step = conv2d(conv2d(x, c1), c2);
            const TensorF32 one_step = conv2d(x, fused);
            CHECK(max_rel_divergence(two_step, one_step) <= 1e-4);
        }
    }
}

TEST_CASE("fuse_1x1_then_conv: nonzero first bias with k>1 is refused") {
    Rng rng(57);
    ConvSpec c1 = random_convspec(rng, 1, 3, 4);
    c1.bias[2] = 0.5f;
    const ConvSpec c2 = random_convspec(rng, 3, 4, 2);
    try {
        fuse_1x1_then_conv(c1, c2);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("border") != std::string::npos);
    }
}

TEST_CASE("merge_parallel_branches: two identical branches double weights and bias") {
    Rng rng(58);
    const ConvSpec c = random_convspec(rng, 3, 4, 4);
    const ConvSpec merged = merge_parallel_branches(std::array{c, c});
    for (size_t i = 0; i < c.weights.size(); ++i)
        CHECK(merged.weights[i] == 2.0f * c.weights[i]);
    for (size_t i = 0; i < c.bias.size(); ++i)
        CHECK(merged.bias[i] == 2.0f * c.bias[i]);
}

TEST_CASE("merge_parallel_branches: a 1x1 branch embeds at the kernel center") {
    Rng rng(59);
    const ConvSpec big = random_convspec(rng, 3, 2, 2);
    const ConvSpec small = random_convspec(rng, 1, 2, 2);
    const ConvSpec merged = merge_parallel_branches(std::array{big, small});
    REQUIRE(merged.kernel == 3);
    for (int o = 0; o < 2; ++o)
        for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v)
                for (int i = 0; i < 2; ++i) {
                    const float expect = big.w(o, u, v, i) +
                                         ((u == 1 && v == 1) ? small.w(o, 0, 0, i) : 0.0f);
                    CHECK(merged.w(o, u, v, i) == expect);
                }
}

TEST_CASE("merge_parallel_branches: equals the explicit sum of branch outputs") {
    Rng rng(60);
    const std::array branches{random_convspec(rng, 3, 3, 4), random_convspec(rng, 1, 3, 4),
                              random_convspec(rng, 5, 3, 4)};
    const ConvSpec merged = merge_parallel_branches(branches);
    REQUIRE(merged.kernel == 5);
    for (const auto& x : probes_c(7, 6, 3, 6, 3000)) {
        TensorF32 sum = conv2d(x, branches[0]);
        sum = add_elementwise(sum, conv2d(x, branches[1]));
        sum = add_elementwise(sum, conv2d(x, branches[2]));
        CHECK(max_rel_divergence(sum, conv2d(x, merged)) <= 1e-4);
    }
}

TEST_CASE("merge_parallel_branches: channel mismatch is an error") {
    Rng rng(61);
    CHECK_THROWS_AS((void)merge_parallel_branches(
                        std::array{random_convspec(rng, 3, 3, 4), random_convspec(rng, 3, 3, 5)}),
                    ShapeError);
}

TEST_CASE("skip_to_identity_conv: zero conv becomes the identity map") {
    const ConvSpec folded = skip_to_identity_conv(make_conv(3, 4, 4));
    Rng rng(62);
    const TensorF32 x = random_tensor({5, 5, 4}, rng);
    CHECK(test::bits_equal(conv2d(x, folded), x));
}

TEST_CASE("skip_to_identity_conv: equals conv plus residual add") {
    Rng rng(63);
    const ConvSpec c = random_convspec(rng, 3, 5, 5);
    const ConvSpec folded = skip_to_identity_conv(c);
    for (const auto& x : probes_c(6, 6, 5, 5, 4000))
        CHECK(max_rel_divergence(add_elementwise(conv2d(x, c), x), conv2d(x, folded)) <= 1e-4);
}

TEST_CASE("skip_to_identity_conv: applying twice keeps adding to the diagonal") {
    Rng rng(64);
    const ConvSpec c = random_convspec(rng, 3, 3, 3);
    const ConvSpec once = skip_to_identity_conv(c);
    const ConvSpec twice = skip_to_identity_conv(once);
    for (int o = 0; o < 3; ++o)
        CHECK(twice.w(o, 1, 1, o) == doctest::Approx(c.w(o, 1, 1, o) + 2.0f));

    CHECK_THROWS_AS((void)skip_to_identity_conv(make_conv(3, 3, 4)), ShapeError);
}

TEST_CASE("anchor_conv: replication followed by depth_to_space is nearest, bit-exact") {
    const ConvSpec a = anchor_conv(9, 3);
    Rng rng(65);
    for (int i = 0; i < 10; ++i) {
        const TensorF32 x = test::random_image(3 + i, 9 - i / 2, rng);
        CHECK(test::bits_equal(depth_to_space(conv2d(x, a), 3), resize_nearest(x, 3)));
    }
}

TEST_CASE("anchor_conv: one RGB pixel repeats nine times") {
    const ConvSpec a = anchor_conv(9, 3);
    TensorF32 px({1, 1, 3}, {10.0f, 20.0f, 30.0f});
    const TensorF32 out = conv2d(px, a);
    REQUIRE(out.shape.c == 27);
    for (int g = 0; g < 9; ++g) {
        CHECK(out.at(0, 0, g * 3 + 0) == 10.0f);
        CHECK(out.at(0, 0, g * 3 + 1) == 20.0f);
        CHECK(out.at(0, 0, g * 3 + 2) == 30.0f);
    }
    CHECK_THROWS_AS((void)anchor_conv(0, 3), ShapeError);
}

namespace {

Graph d2s_then_clip_graph(uint64_t seed) {
    Rng rng(seed);
    Graph g;
    g.scale = 3;
    g.nodes.push_back(make_conv_node("head", g.input_id, random_convspec(rng, 3, 3, 27)));
    OpNode d2s = make_node("d2s", OpKind::DepthToSpace, {"head"});
    d2s.block = 3;
    g.nodes.push_back(d2s);
    OpNode clip = make_node("clip", OpKind::Clip, {"d2s"});
    clip.clip_lo = 0.0f;
    clip.clip_hi = 255.0f;
    g.nodes.push_back(clip);
    g.output_id = "clip";
    return g;
}

} // namespace

TEST_CASE("reorder_clip_before_d2s: swaps the pair and keeps outputs bit-identical") {
    const Graph g = d2s_then_clip_graph(66);
    RewriteReport rep;
    const Graph swapped = reorder_clip_before_d2s(g, &rep);
    REQUIRE(rep.passes_applied.size() == 1);
    CHECK(rep.passes_applied[0].first == "reorder_clip_before_d2s");

    const OpNode* first = swapped.find("d2s"); // id stays, role becomes the clip
    const OpNode* second = swapped.find("clip");
    REQUIRE(first != nullptr);
    REQUIRE(second != nullptr);
    CHECK(first->kind == OpKind::Clip);
    CHECK(second->kind == OpKind::DepthToSpace);

    Rng rng(67);
    for (int i = 0; i < 5; ++i) {
        const TensorF32 x = test::random_image(5, 6, rng);
        CHECK(test::bits_equal(execute(g, x), execute(swapped, x)));
    }

    // second application is a no-op
    RewriteReport rep2;
    const Graph again = reorder_clip_before_d2s(swapped, &rep2);
    CHECK(test::graphs_equal(again, swapped));
    CHECK(rep2.passes_applied[0].second.empty());
}

TEST_CASE("reorder_clip_before_d2s: absent pattern reports a no-op") {
    const Graph g = build_abpn(8, 68); // clip already precedes d2s
    RewriteReport rep;
    const Graph out = reorder_clip_before_d2s(g, &rep);
    CHECK(test::graphs_equal(out, g));
    REQUIRE(rep.passes_applied.size() == 1);
    CHECK(rep.passes_applied[0].second.empty());
}

namespace {

Graph concat_conv_graph(uint64_t seed, ConvSpec* head_out = nullptr) {
    Rng rng(seed);
    Graph g;
    g.scale = 3;
    g.nodes.push_back(
        make_conv_node("fa", g.input_id, random_convspec(rng, 3, 3, 8, ActivationSpec::relu())));
    g.nodes.push_back(
        make_conv_node("fb", g.input_id, random_convspec(rng, 3, 3, 4, ActivationSpec::relu())));
    g.nodes.push_back(make_node("cat", OpKind::Concat, {"fa", "fb"}));
    const ConvSpec head = random_convspec(rng, 1, 12, 27);
    if (head_out)
        *head_out = head;
    g.nodes.push_back(make_conv_node("head", "cat", head));
    OpNode clip = make_node("clip", OpKind::Clip, {"head"});
    clip.clip_hi = 255.0f;
    g.nodes.push_back(clip);
    OpNode d2s = make_node("d2s", OpKind::DepthToSpace, {"clip"});
    d2s.block = 3;
    g.nodes.push_back(d2s);
    g.output_id = "d2s";
    return g;
}

} // namespace

TEST_CASE("concat_conv_to_sum: split weights reassemble to the original") {
    ConvSpec head;
    const Graph g = concat_conv_graph(69, &head);
    RewriteReport rep;
    const Graph out = concat_conv_to_sum(g, &rep);
    REQUIRE(rep.passes_applied.size() == 1);

    const OpNode* ca = out.find("head_a");
    const OpNode* cb = out.find("head_b");
    const OpNode* add = out.find("head");
    REQUIRE(ca != nullptr);
    REQUIRE(cb != nullptr);
    REQUIRE(add != nullptr);
    CHECK(add->kind == OpKind::Add);
    CHECK(out.find("cat") == nullptr);

    for (int o = 0; o < 27; ++o) {
        for (int i = 0; i < 8; ++i)
            CHECK(ca->conv.w(o, 0, 0, i) == head.w(o, 0, 0, i));
        for (int i = 0; i < 4; ++i)
            CHECK(cb->conv.w(o, 0, 0, i) == head.w(o, 0, 0, 8 + i));
        CHECK(ca->conv.bias[size_t(o)] == head.bias[size_t(o)]); // bias lands on one summand
        CHECK(cb->conv.bias[size_t(o)] == 0.0f);
    }
}

TEST_CASE("concat_conv_to_sum: rewritten graph diverges at most 1e-5") {
    for (uint64_t seed : {70, 71, 72}) {
        const Graph g = concat_conv_graph(seed);
        const Graph out = concat_conv_to_sum(g, nullptr);
        validate(out);
        for (const TensorF32& x : probe_inputs(5, 5, 4, seed + 100))
            CHECK(max_rel_divergence(execute(g, x), execute(out, x)) <= 1e-5);
    }
}

TEST_CASE("concat_conv_to_sum: bias is not double counted on zero input") {
    ConvSpec head;
    Graph g = concat_conv_graph(73, &head);
    // zero both feature convs so only the head bias survives
    for (auto* id : {"fa", "fb"}) {
        OpNode* n = g.find(id);
        std::fill(n->conv.weights.begin(), n->conv.weights.end(), 0.0f);
        std::fill(n->conv.bias.begin(), n->conv.bias.end(), 0.0f);
    }
    const Graph out = concat_conv_to_sum(g, nullptr);
    TensorF32 zero({3, 3, 3});
    const TensorF32 a = execute(g, zero);
    const TensorF32 b = execute(out, zero);
    CHECK(test::bits_equal(a, b));
}

TEST_CASE("concat_conv_to_sum: absent pattern leaves the graph untouched") {
    const Graph g = build_abpn(8, 74);
    RewriteReport rep;
    CHECK(test::graphs_equal(concat_conv_to_sum(g, &rep), g));
    CHECK(rep.passes_applied.empty());
}

namespace {

Graph clb_chain_graph(uint64_t seed) {
    Rng rng(seed);
    Graph g;
    g.scale = 3;
    // collapsible linear block: 1x1 expand (ratio 4, zero bias), 3x3, 1x1
    g.nodes.push_back(make_conv_node(
        "expand", g.input_id, random_convspec(rng, 1, 3, 12, ActivationSpec::none(), false)));
    g.nodes.push_back(make_conv_node("mid", "expand", random_convspec(rng, 3, 12, 12)));
    g.nodes.push_back(make_conv_node("project", "mid", random_convspec(rng, 1, 12, 27)));
    OpNode clip = make_node("clip", OpKind::Clip, {"project"});
    clip.clip_hi = 255.0f;
    g.nodes.push_back(clip);
    OpNode d2s = make_node("d2s", OpKind::DepthToSpace, {"clip"});
    d2s.block = 3;
    g.nodes.push_back(d2s);
    g.output_id = "d2s";
    return g;
}

int count_kind(const Graph& g, OpKind k) {
    return int(std::count_if(g.nodes.begin(), g.nodes.end(),
                             [k](const OpNode& n) { return n.kind == k; }));
}

} // namespace

TEST_CASE("collapse_graph: an expanded CLB chain becomes a single 3x3 conv") {
    const Graph g = clb_chain_graph(75);
    const auto [collapsed, rep] = collapse_graph(g);
    CHECK(count_kind(collapsed, OpKind::Conv2d) == 1);
    const OpNode* conv = nullptr;
    for (const auto& n : collapsed.nodes)
        if (n.kind == OpKind::Conv2d)
            conv = &n;
    REQUIRE(conv != nullptr);
    CHECK(conv->conv.kernel == 3);
    CHECK(conv->conv.in_channels == 3);
    CHECK(conv->conv.out_channels == 27);
    CHECK(rep.node_count_after == 3); // conv + clip + d2s
    CHECK(rep.max_rel_divergence <= 1e-4);
    CHECK(rep.left_intact.empty());
}

TEST_CASE("collapse_graph: plain ABPN changes only by the anchor rewrite") {
    const Graph g = build_abpn(8, 76);
    const auto [collapsed, rep] = collapse_graph(g);
    CHECK(rep.node_count_after == rep.node_count_before);
    CHECK(rep.max_abs_divergence == 0.0); // permutation-only rewrites

    REQUIRE(collapsed.nodes.size() == g.nodes.size());
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const OpNode& before = g.nodes[i];
        const OpNode& after = collapsed.nodes[i];
        CHECK(before.id == after.id);
        if (before.kind == OpKind::InputRepeat) {
            CHECK(after.kind == OpKind::Conv2d); // the 1x1 nearest-replication conv
            CHECK(after.conv.kernel == 1);
            CHECK(after.conv.out_channels == 27);
        } else {
            CHECK(before.kind == after.kind);
        }
    }
    CHECK(rep.left_intact == std::vector<std::string>{"residual_add"});
}

namespace {

// a soup of fusable structures: CLB chain into a parallel-merge pair into a
// residual add, closed by head conv / clip / d2s
Graph fusable_soup(uint64_t seed) {
    Rng rng(seed);
    Graph g;
    g.scale = 3;
    g.nodes.push_back(make_conv_node(
        "expand", g.input_id, random_convspec(rng, 1, 3, 8, ActivationSpec::none(), false)));
    g.nodes.push_back(make_conv_node("mid", "expand", random_convspec(rng, 3, 8, 6)));
    g.nodes.push_back(make_conv_node("pa", "mid", random_convspec(rng, 3, 6, 6)));
    g.nodes.push_back(make_conv_node("pb", "mid", random_convspec(rng, 1, 6, 6)));
    g.nodes.push_back(make_node("psum", OpKind::Add, {"pa", "pb"}));
    g.nodes.push_back(make_conv_node("res", "psum", random_convspec(rng, 3, 6, 6)));
    g.nodes.push_back(make_node("radd", OpKind::Add, {"res", "psum"}));
    g.nodes.push_back(make_conv_node("head", "radd", random_convspec(rng, 1, 6, 27)));
    OpNode clip = make_node("clip", OpKind::Clip, {"head"});
    clip.clip_hi = 255.0f;
    g.nodes.push_back(clip);
    OpNode d2s = make_node("d2s", OpKind::DepthToSpace, {"clip"});
    d2s.block = 3;
    g.nodes.push_back(d2s);
    g.output_id = "d2s";
    return g;
}

} // namespace

TEST_CASE("collapse_graph: fusable soup collapses, stays equivalent, is idempotent") {
    for (uint64_t seed : {80, 81, 82}) {
        const Graph g = fusable_soup(seed);
        const auto [collapsed, rep] = collapse_graph(g);
        CHECK(rep.node_count_after < rep.node_count_before);
        CHECK(count_kind(collapsed, OpKind::Add) == 0);
        CHECK(rep.max_rel_divergence <= 1e-4);

        for (const TensorF32& x : probe_inputs(6, 5, 4, seed + 10))
            CHECK(max_rel_divergence(execute(g, x), execute(collapsed, x)) <= 1e-4);

        const auto [twice, rep2] = collapse_graph(collapsed);
        CHECK(test::graphs_equal(twice, collapsed));
        CHECK(rep2.node_count_after == rep2.node_count_before);
    }
}

TEST_CASE("collapse_graph: node count never increases") {
    for (const Graph& g : {build_abpn(8, 90), build_scsrn_inference(8, 3, 91),
                           build_ncnet(8, 3, 92), build_dual_branch(8, 93),
                           concat_conv_graph(94), fusable_soup(95)}) {
        const auto [collapsed, rep] = collapse_graph(g);
        CHECK(rep.node_count_after <= rep.node_count_before);
        validate(collapsed);
    }
}
