// SPDX-License-Identifier: Apache-2.0
//
// Incremental graph construction with on-the-fly shape inference. Output
// tensors are named <node>.out, parameters <node>.w / <node>.b.

#pragma once

#include <string>
#include <vector>

#include "minitrain/graph.hpp"

namespace minitrain {

class GraphBuilder {
public:
    explicit GraphBuilder(DType dtype = DType::f32, Layout layout = Layout::nchw)
        : dtype_(dtype), layout_(layout) {}

    std::string input(const std::string& id, std::vector<int64_t> shape);
    std::string constant(const std::string& id, std::vector<int64_t> shape,
                         std::vector<double> data);

    // Layers (parameters created internally, conv weights OIHW).
    std::string conv(const std::string& name, const std::string& x, int64_t out_c,
                     int64_t kernel, int64_t stride, int64_t pad, bool with_bias = true);
    std::string dwconv(const std::string& name, const std::string& x, int64_t kernel,
                       int64_t stride, int64_t pad, bool with_bias = true);
    // Dense layer with W stored (out, in), i.e. matmul with transpose_b.
    std::string linear(const std::string& name, const std::string& x, int64_t out_dim,
                       bool with_bias = true);

    std::string relu(const std::string& name, const std::string& x);
    std::string relu6(const std::string& name, const std::string& x);
    std::string add(const std::string& name, const std::string& a, const std::string& b);
    std::string global_avgpool(const std::string& name, const std::string& x);
    std::string reshape(const std::string& name, const std::string& x,
                        std::vector<int64_t> shape);

    // Fully explicit node; output spec inferred.
    std::string op(const std::string& name, OpKind kind, std::vector<std::string> inputs,
                   AttrMap attrs = {});

    Graph finish(std::vector<std::string> outputs);

    const Graph& peek() const { return g_; }
    DType dtype() const { return dtype_; }

private:
    std::string add_param(const std::string& id, std::vector<int64_t> shape,
                          TensorRole role, Layout layout = Layout::none);
    std::string emit(const std::string& name, OpKind kind, std::vector<std::string> inputs,
                     AttrMap attrs);

    Graph g_;
    DType dtype_;
    Layout layout_;
};

} // namespace minitrain
