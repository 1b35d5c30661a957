// SPDX-License-Identifier: Apache-2.0

#include "minitrain/builder.hpp"

#include "minitrain/model_io.hpp"

namespace minitrain {

std::string GraphBuilder::input(const std::string& id, std::vector<int64_t> shape) {
    TensorSpec t;
    t.id = id;
    t.shape = std::move(shape);
    t.dtype = dtype_;
    t.role = TensorRole::input;
    if (t.shape.size() == 4) t.layout = layout_;
    g_.tensors.push_back(t);
    g_.inputs.push_back(id);
    return id;
}

std::string GraphBuilder::constant(const std::string& id, std::vector<int64_t> shape,
                                   std::vector<double> data) {
    TensorSpec t;
    t.id = id;
    t.shape = std::move(shape);
    t.dtype = dtype_;
    t.role = TensorRole::constant;
    t.data = std::move(data);
    g_.tensors.push_back(t);
    return id;
}

std::string GraphBuilder::add_param(const std::string& id, std::vector<int64_t> shape,
                                    TensorRole role, Layout layout) {
    TensorSpec t;
    t.id = id;
    t.shape = std::move(shape);
    t.dtype = dtype_;
    t.role = role;
    t.layout = layout;
    g_.tensors.push_back(t);
    g_.params.push_back(id);
    return id;
}

std::string GraphBuilder::emit(const std::string& name, OpKind kind,
                               std::vector<std::string> inputs, AttrMap attrs) {
    OpNode node;
    node.id = name;
    node.kind = kind;
    node.inputs = std::move(inputs);
    node.attrs = std::move(attrs);
    const std::string out_id = name + ".out";
    node.outputs = {out_id};

    TensorSpec out;
    out.id = out_id;
    out.dtype = dtype_;
    out.role = TensorRole::activation;
    g_.tensors.push_back(out);
    g_.nodes.push_back(node);

    TensorSpec& stored = g_.tensor(out_id);
    stored.shape = infer_output_shape(g_, g_.nodes.back());
    if (stored.shape.size() == 4) {
        for (const auto& in : g_.nodes.back().inputs) {
            const TensorSpec& t = g_.tensor(in);
            if (t.shape.size() == 4 && t.layout != Layout::none) {
                stored.layout = t.layout;
                break;
            }
        }
        if (stored.layout == Layout::none) stored.layout = layout_;
    }
    return out_id;
}

std::string GraphBuilder::conv(const std::string& name, const std::string& x,
                               int64_t out_c, int64_t kernel, int64_t stride, int64_t pad,
                               bool with_bias) {
    const TensorSpec& xs = g_.tensor(x);
    const int64_t in_c = xs.layout == Layout::nhwc ? xs.shape[3] : xs.shape[1];
    std::string w = add_param(name + ".w", {out_c, in_c, kernel, kernel},
                              TensorRole::weight, Layout::nchw);
    std::vector<std::string> inputs{x, w};
    if (with_bias) inputs.push_back(add_param(name + ".b", {out_c}, TensorRole::bias));
    return emit(name, OpKind::conv2d, std::move(inputs),
                {{"stride", stride}, {"pad", pad}});
}

std::string GraphBuilder::dwconv(const std::string& name, const std::string& x,
                                 int64_t kernel, int64_t stride, int64_t pad,
                                 bool with_bias) {
    const TensorSpec& xs = g_.tensor(x);
    const int64_t c = xs.layout == Layout::nhwc ? xs.shape[3] : xs.shape[1];
    std::string w =
        add_param(name + ".w", {c, 1, kernel, kernel}, TensorRole::weight, Layout::nchw);
    std::vector<std::string> inputs{x, w};
    if (with_bias) inputs.push_back(add_param(name + ".b", {c}, TensorRole::bias));
    return emit(name, OpKind::dwconv2d, std::move(inputs),
                {{"stride", stride}, {"pad", pad}});
}

std::string GraphBuilder::linear(const std::string& name, const std::string& x,
                                 int64_t out_dim, bool with_bias) {
    const TensorSpec& xs = g_.tensor(x);
    std::string w =
        add_param(name + ".w", {out_dim, xs.shape[1]}, TensorRole::weight);
    std::vector<std::string> inputs{x, w};
    if (with_bias) inputs.push_back(add_param(name + ".b", {out_dim}, TensorRole::bias));
    return emit(name, OpKind::matmul, std::move(inputs), {{"transpose_b", int64_t{1}}});
}

std::string GraphBuilder::relu(const std::string& name, const std::string& x) {
    return emit(name, OpKind::relu, {x}, {});
}

std::string GraphBuilder::relu6(const std::string& name, const std::string& x) {
    return emit(name, OpKind::relu6, {x}, {});
}

std::string GraphBuilder::add(const std::string& name, const std::string& a,
                              const std::string& b) {
    return emit(name, OpKind::add, {a, b}, {});
}

std::string GraphBuilder::global_avgpool(const std::string& name, const std::string& x) {
    return emit(name, OpKind::avgpool2d, {x}, {{"global", int64_t{1}}});
}

std::string GraphBuilder::reshape(const std::string& name, const std::string& x,
                                  std::vector<int64_t> shape) {
    return emit(name, OpKind::reshape, {x}, {{"shape", std::move(shape)}});
}

std::string GraphBuilder::op(const std::string& name, OpKind kind,
                             std::vector<std::string> inputs, AttrMap attrs) {
    return emit(name, kind, std::move(inputs), std::move(attrs));
}

Graph GraphBuilder::finish(std::vector<std::string> outputs) {
    g_.outputs = std::move(outputs);
    assign_layer_index(g_);
    return g_;
}

} // namespace minitrain
