// SPDX-License-Identifier: Apache-2.0
//
// Deterministic model and data generators used by tests, presets and the
// CLI demos.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minitrain/autodiff.hpp"
#include "minitrain/executor.hpp"
#include "minitrain/graph.hpp"

namespace minitrain::fixtures {

struct ModelFixture {
    Graph graph;
    LossSpec loss;
    // First pointwise conv layer ordinal per block, for scheme presets.
    std::vector<int> block_first_conv_layers;
    // All layer ordinals per block (convs of that block).
    std::vector<std::vector<int>> block_layers;
};

// Single dense layer (W stored (out,in)) with bias, mse target.
ModelFixture linear_model(int64_t batch, int64_t in_dim, int64_t out_dim,
                          DType dtype = DType::f32);

// Uniform-width MLP chain with relu between layers, mse target.
ModelFixture mlp(int num_layers, int64_t width, int64_t batch, DType dtype = DType::f32);

// Two-layer classifier for the blobs dataset (softmax CE).
ModelFixture blob_classifier(int64_t batch, int64_t in_dim, int64_t hidden,
                             int64_t classes, DType dtype = DType::f32);

// conv3x3(8) - relu - dwconv3x3 - global avgpool - linear - softmax CE.
ModelFixture conv_toy(int64_t batch = 2, DType dtype = DType::f64);

// Frozen-friendly CNN: two 3x3 convs with relu, pool, classifier head.
ModelFixture winograd_toy(int64_t batch = 2, DType dtype = DType::f64);

// Inverted-residual networks (expand 1x1 -> depthwise 3x3 -> project 1x1
// with residual adds), structurally shaped like the mobile CNN families.
ModelFixture mbv2_like(int64_t batch = 1, DType dtype = DType::f32);     // 19 blocks
ModelFixture mcunet_like(int64_t batch = 1, DType dtype = DType::f32);   // 15 blocks
// Bottleneck-residual network: 16 blocks of 1x1 -> 3x3 -> 1x1 + shortcut.
ModelFixture resnet50_like(int64_t batch = 1, DType dtype = DType::f32);

// Scheme presets keyed to the fixtures above (JSON documents).
std::string mbv2_preset_scheme();      // biases + first 1x1 weights, last 7 of 19
std::string mcunet_preset_scheme();    // biases last 7; first-conv ratios {1,1,1/2,1}
std::string resnet50_preset_scheme();  // biases + first 1x1 weights, last 8 of 16

// Seeded two-Gaussian classification data: x (n, dim), y (n) holding 0/1.
std::pair<TensorValue, TensorValue> blobs(int64_t n, int64_t dim, uint64_t seed,
                                          DType dtype = DType::f32);

// Random small chain graph (conv / dwconv / linear / relu mixes, dims <= 16)
// with a loss, for gradient-check property tests.
ModelFixture random_small_graph(uint64_t seed);

} // namespace minitrain::fixtures
