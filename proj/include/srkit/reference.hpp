#pragma once

#include "srkit/graph.hpp"
#include "srkit/tensor.hpp"

// Plain single-threaded scalar kernels and a naive graph interpreter.
// They define the semantics the parallel kernels are tested against and are
// what the benchmark target compares with; keep them simple, not fast.
namespace srkit::ref {

TensorF32 conv2d(const TensorF32& x, const ConvSpec& spec);
TensorF32 depth_to_space(const TensorF32& x, int block);
TensorF32 space_to_depth(const TensorF32& x, int block);
TensorF32 resize_nearest(const TensorF32& x, int scale);
TensorF32 add_elementwise(const TensorF32& a, const TensorF32& b);
TensorF32 clamp(const TensorF32& a, float lo, float hi);

// Sequential topological evaluation, no buffer reuse, no threading.
TensorF32 execute(const Graph& g, const TensorF32& x);

} // namespace srkit::ref
