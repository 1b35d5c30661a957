// SPDX-License-Identifier: Apache-2.0
//
// Model exchange format: JSON import/export plus a minimal ONNX-subset
// reader (Conv, Gemm, Relu, Add, GlobalAveragePool, Reshape).

#pragma once

#include <string>

#include "minitrain/graph.hpp"

namespace minitrain {

// Parses and validates a model document. Throws a parse Error on malformed
// JSON and a semantic Error on schema violations (unknown kinds, dangling
// tensor references). layer_index is populated from declaration order.
Graph import_model(const std::string& document);
Graph import_model_file(const std::string& path);

std::string export_model(const Graph& g);

// Translates a strict ONNX subset into the native schema. Any op outside
// the subset raises an unsupported Error naming the op type.
Graph import_onnx(const std::string& bytes);
Graph import_onnx_file(const std::string& path);

// Assigns layer ordinals to params by the declaration order of the first
// node consuming each param. Exposed for graph builders.
void assign_layer_index(Graph& g);

} // namespace minitrain
