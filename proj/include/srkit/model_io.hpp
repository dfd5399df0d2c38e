#pragma once

#include <string>

#include "srkit/graph.hpp"
#include "srkit/quant.hpp"

namespace srkit {

// Models are stored as a human-readable JSON manifest plus a raw
// little-endian weight blob: `<stem>.json` and `<stem>.bin`. The manifest
// carries the node list with per-tensor byte offsets into the blob; the
// format is documented in docs/model-format.md. save/load round-trips are
// byte-faithful for weights. A `.json` suffix on `stem` is accepted and
// stripped.
void save_model(const Graph& g, const std::string& stem);
Graph load_model(const std::string& stem);

// Quantized models reuse the manifest with an int8 weight blob (int32
// biases) and a quantization table: per-edge scale/zero-point, per-conv
// weight scales and fixed-point multipliers. Scales are stored as decimal
// strings that round-trip doubles exactly. On load, the structural float
// weights are reconstructed by dequantization.
void save_quantized_model(const QuantizedGraph& qg, const std::string& stem);
QuantizedGraph load_quantized_model(const std::string& stem);

// Peeks at the manifest dtype without loading the blob.
bool model_is_quantized(const std::string& stem);

} // namespace srkit
