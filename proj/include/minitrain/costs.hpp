// SPDX-License-Identifier: Apache-2.0
//
// Static FLOP and multiply counters over graphs. Conventions: one
// multiply-accumulate counts as two FLOPs, data movement (transpose,
// reshape, slice, concat) counts as zero.

#pragma once

#include <cstdint>

#include "minitrain/graph.hpp"

namespace minitrain {

int64_t node_flops(const Graph& g, const OpNode& node);
int64_t graph_flops(const Graph& g);

// Scalar multiplies of the convolution itself, honoring the impl binding:
// direct 3x3 convs do 36 multiplies per 2x2 output tile, winograd-bound
// ones do 16 (element-wise products in the transformed domain).
int64_t conv_multiplies(const Graph& g, const OpNode& node);

} // namespace minitrain
