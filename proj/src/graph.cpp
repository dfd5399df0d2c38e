#include "srkit/graph.hpp"

#include <unordered_map>
#include <unordered_set>

namespace srkit {

const char* op_kind_name(OpKind k) {
    switch (k) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Add: return "add";
    case OpKind::Concat: return "concat";
    case OpKind::Clip: return "clip";
    case OpKind::DepthToSpace: return "depth_to_space";
    case OpKind::InputRepeat: return "input_repeat";
    }
    return "?";
}

const OpNode* Graph::find(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id)
            return &n;
    return nullptr;
}

OpNode* Graph::find(const std::string& id) {
    for (auto& n : nodes)
        if (n.id == id)
            return &n;
    return nullptr;
}

namespace {

void check_arity(const OpNode& n) {
    const size_t k = n.inputs.size();
    switch (n.kind) {
    case OpKind::Conv2d:
    case OpKind::Clip:
    case OpKind::DepthToSpace:
    case OpKind::InputRepeat:
        if (k != 1)
            throw GraphError("node '" + n.id + "': " + op_kind_name(n.kind) +
                             " takes exactly one input, got " + std::to_string(k));
        break;
    case OpKind::Add:
        if (k != 2)
            throw GraphError("node '" + n.id + "': add takes exactly 2 inputs, got " + std::to_string(k));
        break;
    case OpKind::Concat:
        if (k < 2)
            throw GraphError("node '" + n.id + "': concat takes >= 2 inputs, got " + std::to_string(k));
        break;
    }
}

} // namespace

ShapeTable validate(const Graph& g) {
    if (g.nodes.empty())
        throw GraphError("graph has no nodes");
    if (g.scale < 1)
        throw GraphError("graph scale must be >= 1");

    std::unordered_map<std::string, SymShape> shapes;
    shapes[g.input_id] = SymShape{1, 1, 3};

    std::unordered_set<std::string> ids;
    ids.insert(g.input_id);
    for (const auto& n : g.nodes)
        if (!ids.insert(n.id).second)
            throw GraphError("duplicate node id '" + n.id + "'");

    ShapeTable table;
    for (const auto& n : g.nodes) {
        check_arity(n);
        std::vector<SymShape> in;
        for (const auto& ref : n.inputs) {
            auto it = shapes.find(ref);
            if (it == shapes.end()) {
                // distinguish forward references (cycles in a listed order) from unknowns
                if (g.find(ref) != nullptr)
                    throw GraphError("node '" + n.id + "': input '" + ref +
                                     "' is not topologically earlier (cycle or misordered list)");
                throw GraphError("node '" + n.id + "': dangling input '" + ref + "'");
            }
            in.push_back(it->second);
        }

        SymShape out;
        switch (n.kind) {
        case OpKind::Conv2d:
            n.conv.check();
            if (in[0].channels != n.conv.in_channels)
                throw GraphError("node '" + n.id + "': channel mismatch, input has " +
                                 std::to_string(in[0].channels) + ", conv expects " +
                                 std::to_string(n.conv.in_channels));
            out = {in[0].h_factor, in[0].w_factor, n.conv.out_channels};
            break;
        case OpKind::Add:
            if (!(in[0] == in[1]))
                throw GraphError("node '" + n.id + "': add operand shape mismatch (" +
                                 std::to_string(in[0].channels) + " vs " +
                                 std::to_string(in[1].channels) + " channels)");
            out = in[0];
            break;
        case OpKind::Concat: {
            int c = 0;
            for (const auto& s : in) {
                if (s.h_factor != in[0].h_factor || s.w_factor != in[0].w_factor)
                    throw GraphError("node '" + n.id + "': concat spatial mismatch");
                c += s.channels;
            }
            out = {in[0].h_factor, in[0].w_factor, c};
            break;
        }
        case OpKind::Clip:
            if (n.clip_lo > n.clip_hi)
                throw GraphError("node '" + n.id + "': clip lo > hi");
            out = in[0];
            break;
        case OpKind::DepthToSpace:
            if (n.block < 1)
                throw GraphError("node '" + n.id + "': block must be >= 1");
            if (in[0].channels % (n.block * n.block) != 0)
                throw GraphError("node '" + n.id + "': " + std::to_string(in[0].channels) +
                                 " channels not divisible by block^2 = " +
                                 std::to_string(n.block * n.block));
            out = {in[0].h_factor * n.block, in[0].w_factor * n.block,
                   in[0].channels / (n.block * n.block)};
            break;
        case OpKind::InputRepeat:
            if (n.times < 1)
                throw GraphError("node '" + n.id + "': times must be >= 1");
            out = {in[0].h_factor, in[0].w_factor, in[0].channels * n.times};
            break;
        }
        shapes[n.id] = out;
        table.push_back({n.id, out});
    }

    if (g.find(g.output_id) == nullptr)
        throw GraphError("output id '" + g.output_id + "' is not a node");

    // every node must contribute to the output
    std::unordered_set<std::string> live;
    live.insert(g.output_id);
    for (auto it = g.nodes.rbegin(); it != g.nodes.rend(); ++it) {
        if (live.count(it->id))
            for (const auto& ref : it->inputs)
                live.insert(ref);
    }
    for (const auto& n : g.nodes)
        if (!live.count(n.id))
            throw GraphError("node '" + n.id + "' does not reach the output");
    if (!live.count(g.input_id))
        throw GraphError("output does not depend on the graph input");

    const SymShape out = shapes[g.output_id];
    if (out.h_factor != g.scale || out.w_factor != g.scale)
        throw GraphError("output spatial factor " + std::to_string(out.h_factor) + "x" +
                         std::to_string(out.w_factor) + " does not match scale " +
                         std::to_string(g.scale));
    if (out.channels != 3)
        throw GraphError("output has " + std::to_string(out.channels) + " channels, expected 3");
    return table;
}

namespace {

TensorF32 eval_node(const OpNode& n, const std::vector<const TensorF32*>& in) {
    switch (n.kind) {
    case OpKind::Conv2d:
        return conv2d(*in[0], n.conv);
    case OpKind::Add:
        return add_elementwise(*in[0], *in[1]);
    case OpKind::Concat: {
        std::vector<TensorF32> parts;
        parts.reserve(in.size());
        for (const auto* t : in)
            parts.push_back(*t);
        return concat_channels(parts);
    }
    case OpKind::Clip:
        return clamp(*in[0], n.clip_lo, n.clip_hi);
    case OpKind::DepthToSpace:
        return depth_to_space(*in[0], n.block);
    case OpKind::InputRepeat: {
        std::vector<TensorF32> parts(size_t(n.times), *in[0]);
        return concat_channels(parts);
    }
    }
    throw GraphError("node '" + n.id + "': unknown kind");
}

} // namespace

TensorF32 execute_observed(const Graph& g, const TensorF32& x,
                           const std::function<void(const std::string&, const TensorF32&)>& observer) {
    validate(g);
    if (x.shape.c != 3)
        throw ShapeError("execute: input must have 3 channels, got " + std::to_string(x.shape.c));

    std::unordered_map<std::string, int> uses;
    for (const auto& n : g.nodes)
        for (const auto& ref : n.inputs)
            ++uses[ref];
    ++uses[g.output_id];

    struct Slot {
        TensorF32 value;
        int remaining = 0;
    };
    std::unordered_map<std::string, Slot> slots;
    slots[g.input_id] = {x, uses[g.input_id]};

    for (const auto& n : g.nodes) {
        std::vector<const TensorF32*> in;
        in.reserve(n.inputs.size());
        for (const auto& ref : n.inputs)
            in.push_back(&slots.at(ref).value);
        TensorF32 out = eval_node(n, in);
        if (observer)
            observer(n.id, out);
        for (const auto& ref : n.inputs) {
            Slot& s = slots.at(ref);
            if (--s.remaining == 0)
                slots.erase(ref); // last consumer ran, buffer released
        }
        slots[n.id] = {std::move(out), uses[n.id]}; // output keeps an extra use
    }
    return std::move(slots.at(g.output_id).value);
}

TensorF32 execute(const Graph& g, const TensorF32& x) {
    return execute_observed(g, x, nullptr);
}

} // namespace srkit
