// SPDX-License-Identifier: Apache-2.0
//
// Unified dataflow IR shared by forward, backward and optimizer steps.
//
// A Graph is an immutable value: passes take a const reference and return a
// new Graph. Node and tensor ids are strings; every deterministic choice in
// the compiler is tie-broken lexicographically on ids.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "minitrain/attrs.hpp"
#include "minitrain/types.hpp"

namespace minitrain {

struct TensorSpec {
    std::string id;
    std::vector<int64_t> shape;  // empty until shape inference resolves it
    DType dtype = DType::f32;
    Layout layout = Layout::none;
    TensorRole role = TensorRole::activation;
    // Inline payload for role == constant (e.g. pooling kernels built by
    // gradient expansion). Parameters never carry data here; their values
    // live in checkpoints / TrainState.
    std::vector<double> data;

    bool has_shape() const { return !shape.empty(); }
    int64_t numel() const;
    int64_t byte_size() const;
};

struct OpNode {
    std::string id;
    OpKind kind = OpKind::add;
    AttrMap attrs;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    ImplBinding impl = ImplBinding::direct;
    std::vector<OpKind> fused_kinds;  // impl == fused_sequence only
};

// One-time weight preprocessing executed when parameters are bound, not per
// step: winograd filter transforms folded out of the runtime graph. The
// destination is a constant tensor declared in the graph without data.
struct Prepack {
    enum class Kind { wino_weights, permute };
    Kind kind = Kind::permute;
    std::string src;  // parameter supplying the data
    std::string dst;  // constant tensor receiving the transformed data
    std::vector<int64_t> perm;
};

struct Graph {
    std::vector<OpNode> nodes;        // declaration order
    std::vector<TensorSpec> tensors;  // declaration order
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<std::string> params;  // weight and bias tensor ids
    // Param tensor id -> layer ordinal, assigned by declaration order of the
    // first node consuming the param.
    std::map<std::string, int> layer_index;
    // Scalar training objective tensor, set by attach_loss. Empty = none.
    std::string objective;
    std::vector<Prepack> prepack;

    const TensorSpec* find_tensor(const std::string& id) const;
    const OpNode* find_node(const std::string& id) const;
    TensorSpec& tensor(const std::string& id);
    const TensorSpec& tensor(const std::string& id) const;
    bool is_param(const std::string& id) const;
    bool is_input(const std::string& id) const;
    bool is_output(const std::string& id) const;
    int num_layers() const;
};

// Producer/consumer index over a graph snapshot. Cheap to build, never
// stored beyond a pass.
struct GraphIndex {
    explicit GraphIndex(const Graph& g);
    // node index in g.nodes producing the tensor, or -1 for graph inputs,
    // params and constants.
    int producer_of(const std::string& tensor_id) const;
    const std::vector<int>& consumers_of(const std::string& tensor_id) const;

private:
    std::map<std::string, int> producer_;
    std::map<std::string, std::vector<int>> consumers_;
    std::vector<int> no_consumers_;
};

// Returns one entry per violated invariant; empty means valid.
std::vector<std::string> validate_graph(const Graph& g);

// Deterministic topological order (Kahn, lexicographic tie-break on node
// id). Throws a semantic Error on cycles.
std::vector<std::string> topo_sort(const Graph& g);

// Resolves every activation/gradient shape from declared input/param
// shapes. Idempotent; throws a shape Error naming the offending node.
Graph shape_infer(const Graph& g);

// Shape of a node's single output given resolved input specs. Used by
// inference and by validation.
std::vector<int64_t> infer_output_shape(const Graph& g, const OpNode& node,
                                        size_t output_index = 0);

// Channel axis of a rank-4 tensor under the layout (1 for NCHW, 3 for NHWC).
int channel_axis(Layout layout);

// Conv helpers shared by shape inference, cost counting and the executor.
struct Conv2dDims {
    int64_t batch, in_c, in_h, in_w;
    int64_t out_c, out_h, out_w;
    int64_t kh, kw;
    int64_t stride, pad, groups;
};
Conv2dDims conv2d_dims(const Graph& g, const OpNode& node);

} // namespace minitrain
