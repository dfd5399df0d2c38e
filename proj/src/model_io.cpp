#include "srkit/model_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace srkit {

namespace {

using json = nlohmann::ordered_json;

std::string normalize_stem(const std::string& path) {
    if (path.size() > 5 && path.ends_with(".json"))
        return path.substr(0, path.size() - 5);
    return path;
}

void append_u8(std::vector<uint8_t>& blob, const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    blob.insert(blob.end(), b, b + n);
}

void append_f32_le(std::vector<uint8_t>& blob, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    const uint8_t b[4] = {uint8_t(u), uint8_t(u >> 8), uint8_t(u >> 16), uint8_t(u >> 24)};
    append_u8(blob, b, 4);
}

void append_i32_le(std::vector<uint8_t>& blob, int32_t v) {
    const auto u = uint32_t(v);
    const uint8_t b[4] = {uint8_t(u), uint8_t(u >> 8), uint8_t(u >> 16), uint8_t(u >> 24)};
    append_u8(blob, b, 4);
}

float read_f32_le(const uint8_t* p) {
    const uint32_t u = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
                       uint32_t(p[3]) << 24;
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

int32_t read_i32_le(const uint8_t* p) {
    return int32_t(uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
                   uint32_t(p[3]) << 24);
}

std::string double_str(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json activation_json(const ActivationSpec& a) {
    switch (a.kind) {
    case Activation::None: return {{"kind", "none"}};
    case Activation::Relu: return {{"kind", "relu"}};
    case Activation::Clip: return {{"kind", "clip"}, {"lo", a.lo}, {"hi", a.hi}};
    }
    return {{"kind", "none"}};
}

ActivationSpec activation_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "none")
        return ActivationSpec::none();
    if (kind == "relu")
        return ActivationSpec::relu();
    if (kind == "clip")
        return ActivationSpec::clip(j.at("lo").get<float>(), j.at("hi").get<float>());
    throw FormatError("unknown activation kind '" + kind + "'");
}

struct Section {
    uint64_t offset = 0;
    uint64_t length = 0;
};

json section_json(const Section& s) {
    return {{"offset", s.offset}, {"length", s.length}};
}

Section section_from_json(const json& j) {
    return {j.at("offset").get<uint64_t>(), j.at("length").get<uint64_t>()};
}

void write_file(const std::string& path, const void* data, size_t n) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot write '" + path + "'");
    f.write(static_cast<const char*>(data), std::streamsize(n));
    if (!f)
        throw IoError("short write to '" + path + "'");
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f)
        throw IoError("cannot open '" + path + "'");
    const auto n = size_t(f.tellg());
    f.seekg(0);
    std::vector<uint8_t> buf(n);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n));
    if (!f)
        throw IoError("short read from '" + path + "'");
    return buf;
}

json load_manifest(const std::string& stem) {
    const auto text = read_file(stem + ".json");
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest '" + stem + ".json': " + e.what());
    }
    const int version = j.value("version", -1);
    if (version != 1)
        throw FormatError("unsupported model version " + std::to_string(version) +
                          " in '" + stem + ".json' (expected 1)");
    return j;
}

// Structural fields shared by both dtypes; `sections` collects blob ranges
// for overlap checking.
json node_json(const OpNode& n) {
    json j;
    j["id"] = n.id;
    j["kind"] = op_kind_name(n.kind);
    j["inputs"] = n.inputs;
    switch (n.kind) {
    case OpKind::Conv2d:
        j["kernel"] = n.conv.kernel;
        j["in_channels"] = n.conv.in_channels;
        j["out_channels"] = n.conv.out_channels;
        j["activation"] = activation_json(n.conv.activation);
        break;
    case OpKind::Clip:
        j["lo"] = n.clip_lo;
        j["hi"] = n.clip_hi;
        break;
    case OpKind::DepthToSpace:
        j["block"] = n.block;
        break;
    case OpKind::InputRepeat:
        j["times"] = n.times;
        break;
    case OpKind::Add:
    case OpKind::Concat:
        break;
    }
    return j;
}

OpKind kind_from_name(const std::string& name, const std::string& id) {
    for (OpKind k : {OpKind::Conv2d, OpKind::Add, OpKind::Concat, OpKind::Clip,
                     OpKind::DepthToSpace, OpKind::InputRepeat})
        if (name == op_kind_name(k))
            return k;
    throw FormatError("node '" + id + "': unknown kind '" + name + "'");
}

OpNode node_from_json(const json& j) {
    OpNode n;
    n.id = j.at("id").get<std::string>();
    n.kind = kind_from_name(j.at("kind").get<std::string>(), n.id);
    n.inputs = j.at("inputs").get<std::vector<std::string>>();
    switch (n.kind) {
    case OpKind::Conv2d:
        n.conv.kernel = j.at("kernel").get<int>();
        n.conv.in_channels = j.at("in_channels").get<int>();
        n.conv.out_channels = j.at("out_channels").get<int>();
        n.conv.activation = activation_from_json(j.at("activation"));
        break;
    case OpKind::Clip:
        n.clip_lo = j.at("lo").get<float>();
        n.clip_hi = j.at("hi").get<float>();
        break;
    case OpKind::DepthToSpace:
        n.block = j.at("block").get<int>();
        break;
    case OpKind::InputRepeat:
        n.times = j.at("times").get<int>();
        break;
    default:
        break;
    }
    return n;
}

void check_sections(const std::vector<Section>& sections, size_t blob_size,
                    const std::string& stem) {
    std::vector<Section> sorted = sections;
    std::sort(sorted.begin(), sorted.end(),
              [](const Section& a, const Section& b) { return a.offset < b.offset; });
    uint64_t prev_end = 0;
    for (const auto& s : sorted) {
        if (s.offset + s.length > blob_size)
            throw FormatError("'" + stem + ".bin': section [" + std::to_string(s.offset) + ", " +
                              std::to_string(s.offset + s.length) + ") overflows blob of " +
                              std::to_string(blob_size) + " bytes");
        if (s.offset < prev_end)
            throw FormatError("'" + stem + ".json': overlapping blob sections");
        prev_end = s.offset + s.length;
    }
}

} // namespace

void save_model(const Graph& g, const std::string& path) {
    const std::string stem = normalize_stem(path);
    validate(g);

    std::vector<uint8_t> blob;
    json nodes = json::array();
    for (const auto& n : g.nodes) {
        json j = node_json(n);
        if (n.kind == OpKind::Conv2d) {
            Section wsec{blob.size(), n.conv.weights.size() * 4};
            for (float v : n.conv.weights)
                append_f32_le(blob, v);
            Section bsec{blob.size(), n.conv.bias.size() * 4};
            for (float v : n.conv.bias)
                append_f32_le(blob, v);
            j["weights"] = section_json(wsec);
            j["bias"] = section_json(bsec);
        }
        nodes.push_back(std::move(j));
    }

    json j;
    j["version"] = 1;
    j["dtype"] = "float32";
    j["scale"] = g.scale;
    j["input_id"] = g.input_id;
    j["output_id"] = g.output_id;
    j["nodes"] = std::move(nodes);

    const std::string text = j.dump(2);
    write_file(stem + ".json", text.data(), text.size());
    write_file(stem + ".bin", blob.data(), blob.size());
}

Graph load_model(const std::string& path) {
    const std::string stem = normalize_stem(path);
    const json j = load_manifest(stem);
    if (j.value("dtype", "float32") != "float32")
        throw FormatError("'" + stem + ".json' is not a float32 model (dtype " +
                          j.value("dtype", "?") + "); use the quantized loader");
    const auto blob = read_file(stem + ".bin");

    Graph g;
    g.scale = j.at("scale").get<int>();
    g.input_id = j.at("input_id").get<std::string>();
    g.output_id = j.at("output_id").get<std::string>();

    std::vector<Section> sections;
    for (const auto& nj : j.at("nodes")) {
        OpNode n = node_from_json(nj);
        if (n.kind == OpKind::Conv2d) {
            const Section ws = section_from_json(nj.at("weights"));
            const Section bs = section_from_json(nj.at("bias"));
            const uint64_t wn =
                uint64_t(n.conv.out_channels) * n.conv.kernel * n.conv.kernel * n.conv.in_channels;
            if (ws.length != wn * 4 || bs.length != uint64_t(n.conv.out_channels) * 4)
                throw FormatError("node '" + n.id + "': section length inconsistent with declared shape");
            sections.push_back(ws);
            sections.push_back(bs);
            check_sections(sections, blob.size(), stem);
            n.conv.weights.resize(size_t(wn));
            for (uint64_t i = 0; i < wn; ++i)
                n.conv.weights[size_t(i)] = read_f32_le(&blob[size_t(ws.offset + i * 4)]);
            n.conv.bias.resize(size_t(n.conv.out_channels));
            for (int i = 0; i < n.conv.out_channels; ++i)
                n.conv.bias[size_t(i)] = read_f32_le(&blob[size_t(bs.offset + uint64_t(i) * 4)]);
        }
        g.nodes.push_back(std::move(n));
    }
    validate(g);
    return g;
}

void save_quantized_model(const QuantizedGraph& qg, const std::string& path) {
    const std::string stem = normalize_stem(path);
    const Graph& g = qg.structure;
    validate(g);

    std::vector<uint8_t> blob;
    json nodes = json::array();
    for (const auto& n : g.nodes) {
        json j = node_json(n);
        if (n.kind == OpKind::Conv2d) {
            const QuantizedConvSpec& q = qg.convs.at(n.id);
            Section wsec{blob.size(), q.weights.size()};
            append_u8(blob, q.weights.data(), q.weights.size());
            Section bsec{blob.size(), q.bias.size() * 4};
            for (int32_t v : q.bias)
                append_i32_le(blob, v);
            j["weights"] = section_json(wsec);
            j["bias"] = section_json(bsec);
        }
        nodes.push_back(std::move(j));
    }

    json edges = json::object();
    for (const auto& [id, p] : qg.edges)
        edges[id] = {{"scale", double_str(p.scale)}, {"zero_point", p.zero_point}};

    json convs = json::object();
    for (const auto& [id, q] : qg.convs) {
        json scales = json::array();
        for (double s : q.weight_scales)
            scales.push_back(double_str(s));
        json mults = json::array();
        for (const auto& m : q.multipliers)
            mults.push_back({{"mantissa", m.mantissa}, {"shift", m.shift}});
        convs[id] = {{"weight_scales", std::move(scales)}, {"multipliers", std::move(mults)}};
    }

    json j;
    j["version"] = 1;
    j["dtype"] = "int8";
    j["scale"] = g.scale;
    j["input_id"] = g.input_id;
    j["output_id"] = g.output_id;
    j["nodes"] = std::move(nodes);
    j["quantization"] = {
        {"scheme", qg.scheme == WeightScheme::PerChannel ? "per-channel" : "per-tensor"},
        {"edges", std::move(edges)},
        {"convs", std::move(convs)}};

    const std::string text = j.dump(2);
    write_file(stem + ".json", text.data(), text.size());
    write_file(stem + ".bin", blob.data(), blob.size());
}

QuantizedGraph load_quantized_model(const std::string& path) {
    const std::string stem = normalize_stem(path);
    const json j = load_manifest(stem);
    if (j.value("dtype", "") != "int8")
        throw FormatError("'" + stem + ".json' is not an int8 model (dtype " +
                          j.value("dtype", "?") + ")");
    const auto blob = read_file(stem + ".bin");
    const json& qj = j.at("quantization");

    QuantizedGraph qg;
    qg.scheme = qj.at("scheme").get<std::string>() == "per-tensor" ? WeightScheme::PerTensor
                                                                   : WeightScheme::PerChannel;
    Graph& g = qg.structure;
    g.scale = j.at("scale").get<int>();
    g.input_id = j.at("input_id").get<std::string>();
    g.output_id = j.at("output_id").get<std::string>();

    for (const auto& [id, ej] : qj.at("edges").items())
        qg.edges[id] = {std::strtod(ej.at("scale").get<std::string>().c_str(), nullptr),
                        ej.at("zero_point").get<int>()};

    std::vector<Section> sections;
    for (const auto& nj : j.at("nodes")) {
        OpNode n = node_from_json(nj);
        if (n.kind == OpKind::Conv2d) {
            QuantizedConvSpec q;
            q.kernel = n.conv.kernel;
            q.in_channels = n.conv.in_channels;
            q.out_channels = n.conv.out_channels;
            q.activation = n.conv.activation;
            q.input = qg.edges.at(nj.at("inputs").at(0).get<std::string>());
            q.output = qg.edges.at(n.id);

            const json& cj = qj.at("convs").at(n.id);
            for (const auto& s : cj.at("weight_scales"))
                q.weight_scales.push_back(std::strtod(s.get<std::string>().c_str(), nullptr));
            for (const auto& m : cj.at("multipliers"))
                q.multipliers.push_back(
                    {m.at("mantissa").get<int32_t>(), m.at("shift").get<int>()});

            const Section ws = section_from_json(nj.at("weights"));
            const Section bs = section_from_json(nj.at("bias"));
            const uint64_t wn = uint64_t(q.out_channels) * q.kernel * q.kernel * q.in_channels;
            if (ws.length != wn || bs.length != uint64_t(q.out_channels) * 4)
                throw FormatError("node '" + n.id + "': section length inconsistent with declared shape");
            sections.push_back(ws);
            sections.push_back(bs);
            check_sections(sections, blob.size(), stem);
            q.weights.resize(size_t(wn));
            std::memcpy(q.weights.data(), &blob[size_t(ws.offset)], size_t(wn));
            q.bias.resize(size_t(q.out_channels));
            for (int i = 0; i < q.out_channels; ++i)
                q.bias[size_t(i)] = read_i32_le(&blob[size_t(bs.offset + uint64_t(i) * 4)]);

            // reconstruct reference float weights by dequantization
            n.conv.weights.resize(size_t(wn));
            const int64_t per_out = int64_t(q.kernel) * q.kernel * q.in_channels;
            for (int o = 0; o < q.out_channels; ++o)
                for (int64_t t = 0; t < per_out; ++t)
                    n.conv.weights[size_t(o * per_out + t)] =
                        float(q.weight_scale(o) * q.weights[size_t(o * per_out + t)]);
            n.conv.bias.resize(size_t(q.out_channels));
            for (int o = 0; o < q.out_channels; ++o)
                n.conv.bias[size_t(o)] = float(double(q.bias[size_t(o)]) * q.input.scale * q.weight_scale(o));

            qg.convs[n.id] = std::move(q);
        }
        g.nodes.push_back(std::move(n));
    }

    // per-operand rescale multipliers are derived from the (exactly
    // round-tripped) edge scales
    for (const auto& n : g.nodes) {
        if (n.kind == OpKind::Add || n.kind == OpKind::Concat) {
            std::vector<FixedPointMultiplier> ms;
            for (const auto& ref : n.inputs)
                ms.push_back(quantize_multiplier(qg.edges.at(ref).scale / qg.edges.at(n.id).scale));
            qg.rescales[n.id] = std::move(ms);
        } else if (n.kind == OpKind::Clip) {
            qg.rescales[n.id] = {
                quantize_multiplier(qg.edges.at(n.inputs[0]).scale / qg.edges.at(n.id).scale)};
        }
    }

    validate(g);
    return qg;
}

bool model_is_quantized(const std::string& path) {
    const std::string stem = normalize_stem(path);
    return load_manifest(stem).value("dtype", "float32") == "int8";
}

} // namespace srkit
