// SPDX-License-Identifier: Apache-2.0

#include "minitrain/graph.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <sstream>

namespace minitrain {

namespace {

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

[[noreturn]] void shape_error(const std::string& node_id, const std::string& msg) {
    throw Error(ErrorKind::shape, "node '" + node_id + "': " + msg);
}

struct Arity {
    size_t min_in, max_in, outs;
};

Arity arity_of(OpKind kind) {
    switch (kind) {
        case OpKind::matmul: return {2, 3, 1};
        case OpKind::transpose: return {1, 1, 1};
        case OpKind::conv2d: return {2, 3, 1};
        case OpKind::dwconv2d: return {2, 3, 1};
        case OpKind::conv2d_input_grad: return {2, 2, 1};
        case OpKind::conv2d_weight_grad: return {2, 2, 1};
        case OpKind::add: return {2, 2, 1};
        case OpKind::mul: return {2, 2, 1};
        case OpKind::scale: return {1, 1, 1};
        case OpKind::relu: return {1, 1, 1};
        case OpKind::relu6: return {1, 1, 1};
        case OpKind::relu_grad_mask: return {2, 2, 1};
        case OpKind::reduce_sum: return {1, 1, 1};
        case OpKind::avgpool2d: return {1, 1, 1};
        case OpKind::reshape: return {1, 1, 1};
        case OpKind::slice: return {1, 1, 1};
        case OpKind::concat: return {2, 16, 1};
        case OpKind::softmax_ce_loss: return {2, 2, 1};
        case OpKind::softmax_ce_grad: return {2, 2, 1};
        case OpKind::mse_loss: return {2, 2, 1};
        case OpKind::mse_grad: return {2, 2, 1};
        case OpKind::apply_sgd: return {2, 2, 0};
        case OpKind::apply_momentum: return {3, 3, 0};
        case OpKind::fused: return {1, 8, 1};
    }
    return {1, 8, 1};
}

bool rank1_broadcastable(const std::vector<int64_t>& big, Layout layout,
                         const std::vector<int64_t>& small) {
    if (small.size() != 1) return false;
    if (big.size() == 2) return small[0] == big[1];
    if (big.size() == 4) return small[0] == big[static_cast<size_t>(channel_axis(layout))];
    return false;
}

} // namespace

int64_t TensorSpec::numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

int64_t TensorSpec::byte_size() const {
    return numel() * static_cast<int64_t>(dtype_width(dtype));
}

const TensorSpec* Graph::find_tensor(const std::string& id) const {
    for (const auto& t : tensors) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

const OpNode* Graph::find_node(const std::string& id) const {
    for (const auto& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

TensorSpec& Graph::tensor(const std::string& id) {
    for (auto& t : tensors) {
        if (t.id == id) return t;
    }
    throw Error(ErrorKind::semantic, "unknown tensor '" + id + "'");
}

const TensorSpec& Graph::tensor(const std::string& id) const {
    const TensorSpec* t = find_tensor(id);
    if (!t) throw Error(ErrorKind::semantic, "unknown tensor '" + id + "'");
    return *t;
}

bool Graph::is_param(const std::string& id) const {
    return std::find(params.begin(), params.end(), id) != params.end();
}

bool Graph::is_input(const std::string& id) const {
    return std::find(inputs.begin(), inputs.end(), id) != inputs.end();
}

bool Graph::is_output(const std::string& id) const {
    return std::find(outputs.begin(), outputs.end(), id) != outputs.end();
}

int Graph::num_layers() const {
    int n = 0;
    for (const auto& [id, ordinal] : layer_index) n = std::max(n, ordinal + 1);
    return n;
}

GraphIndex::GraphIndex(const Graph& g) {
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        for (const auto& out : g.nodes[i].outputs) {
            producer_[out] = static_cast<int>(i);
        }
        for (const auto& in : g.nodes[i].inputs) {
            consumers_[in].push_back(static_cast<int>(i));
        }
    }
}

int GraphIndex::producer_of(const std::string& tensor_id) const {
    auto it = producer_.find(tensor_id);
    return it == producer_.end() ? -1 : it->second;
}

const std::vector<int>& GraphIndex::consumers_of(const std::string& tensor_id) const {
    auto it = consumers_.find(tensor_id);
    return it == consumers_.end() ? no_consumers_ : it->second;
}

int channel_axis(Layout layout) {
    return layout == Layout::nhwc ? 3 : 1;
}

Conv2dDims conv2d_dims(const Graph& g, const OpNode& node) {
    Conv2dDims d{};
    d.stride = attr_int(node.attrs, "stride", 1);
    d.pad = attr_int(node.attrs, "pad", 0);
    d.groups = attr_int(node.attrs, "groups", 1);

    auto fill_from_x = [&](const TensorSpec& x) {
        const bool nhwc = x.layout == Layout::nhwc;
        d.batch = x.shape[0];
        d.in_c = nhwc ? x.shape[3] : x.shape[1];
        d.in_h = nhwc ? x.shape[1] : x.shape[2];
        d.in_w = nhwc ? x.shape[2] : x.shape[3];
    };
    auto kernel_from_w = [&](const TensorSpec& w) {
        // OIHW when layout is none/NCHW, OHWI under NHWC.
        const bool nhwc = w.layout == Layout::nhwc;
        d.kh = nhwc ? w.shape[1] : w.shape[2];
        d.kw = nhwc ? w.shape[2] : w.shape[3];
    };
    auto out_spatial = [&]() {
        d.out_h = (d.in_h + 2 * d.pad - d.kh) / d.stride + 1;
        d.out_w = (d.in_w + 2 * d.pad - d.kw) / d.stride + 1;
    };

    const OpKind kind = node.kind == OpKind::fused ? node.fused_kinds.at(0) : node.kind;
    switch (kind) {
        case OpKind::conv2d:
        case OpKind::dwconv2d: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            const TensorSpec& w = g.tensor(node.inputs[1]);
            fill_from_x(x);
            kernel_from_w(w);
            if (kind == OpKind::dwconv2d) {
                d.groups = d.in_c;
                d.out_c = d.in_c;
            } else {
                d.out_c = w.shape[0];
            }
            out_spatial();
            break;
        }
        case OpKind::conv2d_input_grad: {
            const TensorSpec& dy = g.tensor(node.inputs[0]);
            const TensorSpec& w = g.tensor(node.inputs[1]);
            auto x_shape = require_attr_ints(node.attrs, "x_shape", node.id);
            const bool nhwc = dy.layout == Layout::nhwc;
            d.batch = x_shape[0];
            d.in_c = nhwc ? x_shape[3] : x_shape[1];
            d.in_h = nhwc ? x_shape[1] : x_shape[2];
            d.in_w = nhwc ? x_shape[2] : x_shape[3];
            kernel_from_w(w);
            d.out_c = nhwc ? dy.shape[3] : dy.shape[1];
            d.out_h = nhwc ? dy.shape[1] : dy.shape[2];
            d.out_w = nhwc ? dy.shape[2] : dy.shape[3];
            break;
        }
        case OpKind::conv2d_weight_grad: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            const TensorSpec& dy = g.tensor(node.inputs[1]);
            fill_from_x(x);
            const bool nhwc = x.layout == Layout::nhwc;
            d.out_c = nhwc ? dy.shape[3] : dy.shape[1];
            d.out_h = nhwc ? dy.shape[1] : dy.shape[2];
            d.out_w = nhwc ? dy.shape[2] : dy.shape[3];
            d.kh = d.in_h + 2 * d.pad - (d.out_h - 1) * d.stride;
            d.kw = d.in_w + 2 * d.pad - (d.out_w - 1) * d.stride;
            break;
        }
        case OpKind::avgpool2d: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            fill_from_x(x);
            if (attr_int(node.attrs, "global", 0)) {
                d.kh = d.in_h;
                d.kw = d.in_w;
                d.stride = 1;
                d.pad = 0;
            } else {
                auto kernel = require_attr_ints(node.attrs, "kernel", node.id);
                d.kh = kernel[0];
                d.kw = kernel.size() > 1 ? kernel[1] : kernel[0];
                d.stride = attr_int(node.attrs, "stride", d.kh);
            }
            d.out_c = d.in_c;
            d.groups = d.in_c;
            out_spatial();
            break;
        }
        default:
            throw Error(ErrorKind::semantic,
                        "node '" + node.id + "' is not a conv-like op");
    }
    return d;
}

namespace {

std::vector<int64_t> rank4_shape(Layout layout, int64_t n, int64_t c, int64_t h,
                                 int64_t w) {
    if (layout == Layout::nhwc) return {n, h, w, c};
    return {n, c, h, w};
}

std::vector<int64_t> infer_matmul(const Graph& g, const OpNode& node) {
    const TensorSpec& x = g.tensor(node.inputs[0]);
    const TensorSpec& w = g.tensor(node.inputs[1]);
    if (x.shape.size() != 2 || w.shape.size() != 2)
        shape_error(node.id, "matmul operands must be rank 2, got " +
                                 shape_str(x.shape) + " x " + shape_str(w.shape));
    const bool ta = attr_int(node.attrs, "transpose_a", 0) != 0;
    const bool tb = attr_int(node.attrs, "transpose_b", 0) != 0;
    const int64_t m = ta ? x.shape[1] : x.shape[0];
    const int64_t k = ta ? x.shape[0] : x.shape[1];
    const int64_t k2 = tb ? w.shape[1] : w.shape[0];
    const int64_t n = tb ? w.shape[0] : w.shape[1];
    if (k != k2)
        shape_error(node.id, "matmul inner dims disagree: " + shape_str(x.shape) +
                                 " x " + shape_str(w.shape));
    if (node.inputs.size() == 3) {
        const TensorSpec& b = g.tensor(node.inputs[2]);
        if (b.shape.size() != 1 || b.shape[0] != n)
            shape_error(node.id, "bias shape " + shape_str(b.shape) +
                                     " incompatible with output width " +
                                     std::to_string(n));
    }
    return {m, n};
}

std::vector<int64_t> infer_elementwise_pair(const Graph& g, const OpNode& node) {
    const TensorSpec& a = g.tensor(node.inputs[0]);
    const TensorSpec& b = g.tensor(node.inputs[1]);
    if (a.shape == b.shape) return a.shape;
    if (rank1_broadcastable(a.shape, a.layout, b.shape)) return a.shape;
    shape_error(node.id, "operand shapes " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape) + " neither equal nor bias-broadcast");
}

std::vector<int64_t> infer_reduce_sum(const Graph& g, const OpNode& node) {
    const TensorSpec& x = g.tensor(node.inputs[0]);
    auto axes = require_attr_ints(node.attrs, "axes", node.id);
    const bool keepdims = attr_int(node.attrs, "keepdims", 0) != 0;
    std::vector<bool> reduced(x.shape.size(), false);
    for (int64_t a : axes) {
        if (a < 0 || a >= static_cast<int64_t>(x.shape.size()))
            shape_error(node.id, "reduce axis " + std::to_string(a) + " out of range");
        reduced[static_cast<size_t>(a)] = true;
    }
    std::vector<int64_t> out;
    for (size_t i = 0; i < x.shape.size(); ++i) {
        if (reduced[i]) {
            if (keepdims) out.push_back(1);
        } else {
            out.push_back(x.shape[i]);
        }
    }
    if (out.empty()) out.push_back(1);
    return out;
}

} // namespace

std::vector<int64_t> infer_output_shape(const Graph& g, const OpNode& node,
                                        size_t output_index) {
    (void)output_index;
    OpKind kind = node.kind;
    if (kind == OpKind::fused) {
        if (node.fused_kinds.empty())
            shape_error(node.id, "fused node without fused_kinds");
        // Linear-headed fusions produce the linear op's shape; pure
        // elementwise chains keep the first operand's shape.
        kind = node.fused_kinds[0];
        if (kind == OpKind::add || kind == OpKind::mul || kind == OpKind::scale ||
            kind == OpKind::relu || kind == OpKind::relu6)
            return g.tensor(node.inputs[0]).shape;
    }
    switch (kind) {
        case OpKind::matmul:
            return infer_matmul(g, node);
        case OpKind::transpose: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            std::vector<int64_t> perm =
                attr_ints(node.attrs, "perm", {});
            if (perm.empty()) {
                perm.resize(x.shape.size());
                std::iota(perm.rbegin(), perm.rend(), 0);
            }
            if (perm.size() != x.shape.size())
                shape_error(node.id, "perm rank mismatch");
            std::vector<int64_t> out(x.shape.size());
            for (size_t i = 0; i < perm.size(); ++i)
                out[i] = x.shape[static_cast<size_t>(perm[i])];
            return out;
        }
        case OpKind::conv2d:
        case OpKind::dwconv2d: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            const TensorSpec& w = g.tensor(node.inputs[1]);
            if (x.shape.size() != 4 || w.shape.size() != 4)
                shape_error(node.id, "conv operands must be rank 4");
            Conv2dDims d = conv2d_dims(g, node);
            if (d.out_h < 1 || d.out_w < 1)
                shape_error(node.id, "kernel larger than padded input");
            const bool nhwc = x.layout == Layout::nhwc;
            const int64_t w_in_c = node.kind == OpKind::dwconv2d
                                       ? 1
                                       : (nhwc ? w.shape[3] : w.shape[1]);
            const int64_t expect_in_c =
                node.kind == OpKind::dwconv2d ? 1 : d.in_c / d.groups;
            if (w_in_c != expect_in_c)
                shape_error(node.id, "weight " + shape_str(w.shape) +
                                         " inconsistent with input channels " +
                                         std::to_string(d.in_c));
            if (node.kind == OpKind::dwconv2d && w.shape[0] != d.in_c)
                shape_error(node.id, "depthwise weight channels " +
                                         std::to_string(w.shape[0]) +
                                         " != input channels " + std::to_string(d.in_c));
            if (node.inputs.size() == 3) {
                const TensorSpec& b = g.tensor(node.inputs[2]);
                if (b.shape.size() != 1 || b.shape[0] != d.out_c)
                    shape_error(node.id, "bias shape " + shape_str(b.shape) +
                                             " incompatible with out channels " +
                                             std::to_string(d.out_c));
            }
            return rank4_shape(x.layout, d.batch, d.out_c, d.out_h, d.out_w);
        }
        case OpKind::conv2d_input_grad:
            return require_attr_ints(node.attrs, "x_shape", node.id);
        case OpKind::conv2d_weight_grad: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            Conv2dDims d = conv2d_dims(g, node);
            if (d.kh < 1 || d.kw < 1)
                shape_error(node.id, "derived kernel size is non-positive");
            const bool nhwc = x.layout == Layout::nhwc;
            const int64_t in_per_group = d.groups == d.in_c ? 1 : d.in_c / d.groups;
            if (nhwc) return {d.out_c, d.kh, d.kw, in_per_group};
            return {d.out_c, in_per_group, d.kh, d.kw};
        }
        case OpKind::add:
        case OpKind::mul:
            return infer_elementwise_pair(g, node);
        case OpKind::scale:
        case OpKind::relu:
        case OpKind::relu6:
            return g.tensor(node.inputs[0]).shape;
        case OpKind::relu_grad_mask: {
            const TensorSpec& dy = g.tensor(node.inputs[0]);
            const TensorSpec& ref = g.tensor(node.inputs[1]);
            if (dy.shape != ref.shape)
                shape_error(node.id, "mask reference shape differs from gradient");
            return dy.shape;
        }
        case OpKind::reduce_sum:
            return infer_reduce_sum(g, node);
        case OpKind::avgpool2d: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            if (x.shape.size() != 4) shape_error(node.id, "avgpool input must be rank 4");
            Conv2dDims d = conv2d_dims(g, node);
            if (d.out_h < 1 || d.out_w < 1)
                shape_error(node.id, "pool window larger than input");
            return rank4_shape(x.layout, d.batch, d.out_c, d.out_h, d.out_w);
        }
        case OpKind::reshape: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            auto shape = require_attr_ints(node.attrs, "shape", node.id);
            int64_t n = 1;
            for (int64_t v : shape) n *= v;
            if (n != x.numel())
                shape_error(node.id, "reshape " + shape_str(x.shape) + " -> " +
                                         shape_str(shape) + " changes element count");
            return shape;
        }
        case OpKind::slice: {
            const TensorSpec& x = g.tensor(node.inputs[0]);
            auto begin = require_attr_ints(node.attrs, "begin", node.id);
            auto end = require_attr_ints(node.attrs, "end", node.id);
            if (begin.size() != x.shape.size() || end.size() != x.shape.size())
                shape_error(node.id, "slice bounds rank mismatch");
            std::vector<int64_t> out;
            for (size_t i = 0; i < begin.size(); ++i) {
                if (begin[i] < 0 || end[i] > x.shape[i] || begin[i] >= end[i])
                    shape_error(node.id, "slice bounds out of range on axis " +
                                             std::to_string(i));
                out.push_back(end[i] - begin[i]);
            }
            return out;
        }
        case OpKind::concat: {
            const int64_t axis = require_attr_int(node.attrs, "axis", node.id);
            const TensorSpec& first = g.tensor(node.inputs[0]);
            std::vector<int64_t> out = first.shape;
            if (axis < 0 || axis >= static_cast<int64_t>(out.size()))
                shape_error(node.id, "concat axis out of range");
            for (size_t i = 1; i < node.inputs.size(); ++i) {
                const TensorSpec& t = g.tensor(node.inputs[i]);
                if (t.shape.size() != out.size())
                    shape_error(node.id, "concat rank mismatch");
                for (size_t a = 0; a < out.size(); ++a) {
                    if (static_cast<int64_t>(a) == axis) continue;
                    if (t.shape[a] != out[a])
                        shape_error(node.id, "concat non-axis dims differ");
                }
                out[static_cast<size_t>(axis)] += t.shape[static_cast<size_t>(axis)];
            }
            return out;
        }
        case OpKind::softmax_ce_loss: {
            const TensorSpec& logits = g.tensor(node.inputs[0]);
            const TensorSpec& targets = g.tensor(node.inputs[1]);
            if (logits.shape.size() != 2 || targets.shape.size() != 1 ||
                targets.shape[0] != logits.shape[0])
                shape_error(node.id, "softmax CE expects logits (M,N) and targets (M)");
            return {1};
        }
        case OpKind::softmax_ce_grad: {
            const TensorSpec& logits = g.tensor(node.inputs[0]);
            return logits.shape;
        }
        case OpKind::mse_loss: {
            const TensorSpec& pred = g.tensor(node.inputs[0]);
            const TensorSpec& target = g.tensor(node.inputs[1]);
            if (pred.shape != target.shape)
                shape_error(node.id, "mse operands differ: " + shape_str(pred.shape) +
                                         " vs " + shape_str(target.shape));
            return {1};
        }
        case OpKind::mse_grad:
            return g.tensor(node.inputs[0]).shape;
        case OpKind::apply_sgd:
        case OpKind::apply_momentum:
            return {};
        case OpKind::fused:
            break;
    }
    shape_error(node.id, "no shape rule for kind");
}

std::vector<std::string> topo_sort(const Graph& g) {
    GraphIndex index(g);
    std::map<std::string, size_t> node_pos;
    for (size_t i = 0; i < g.nodes.size(); ++i) node_pos[g.nodes[i].id] = i;

    std::vector<int> indegree(g.nodes.size(), 0);
    std::vector<std::vector<int>> succ(g.nodes.size());
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        for (const auto& in : g.nodes[i].inputs) {
            int p = index.producer_of(in);
            if (p >= 0 && p != static_cast<int>(i)) {
                succ[static_cast<size_t>(p)].push_back(static_cast<int>(i));
                ++indegree[i];
            }
        }
    }

    // Min-heap on node id keeps the order deterministic.
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        if (indegree[i] == 0) ready.push(g.nodes[i].id);
    }

    std::vector<std::string> order;
    order.reserve(g.nodes.size());
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        for (int s : succ[node_pos[id]]) {
            if (--indegree[static_cast<size_t>(s)] == 0)
                ready.push(g.nodes[static_cast<size_t>(s)].id);
        }
    }
    if (order.size() != g.nodes.size())
        throw Error(ErrorKind::semantic, "graph contains a cycle");
    return order;
}

Graph shape_infer(const Graph& g) {
    Graph out = g;
    auto order = topo_sort(out);
    std::map<std::string, size_t> node_pos;
    for (size_t i = 0; i < out.nodes.size(); ++i) node_pos[out.nodes[i].id] = i;

    for (const auto& node_id : order) {
        OpNode& node = out.nodes[node_pos[node_id]];
        for (const auto& in : node.inputs) {
            if (!out.tensor(in).has_shape())
                shape_error(node.id, "input tensor '" + in + "' has no shape");
        }
        if (node.outputs.empty()) continue;
        std::vector<int64_t> shape = infer_output_shape(out, node);
        TensorSpec& result = out.tensor(node.outputs[0]);
        if (result.has_shape() && result.shape != shape)
            shape_error(node.id, "declared output shape " + shape_str(result.shape) +
                                     " contradicts inferred " + shape_str(shape));
        result.shape = shape;
        if (shape.size() == 4 && result.layout == Layout::none) {
            // Rank-4 results inherit the layout of the first rank-4 operand.
            Layout inherited = Layout::nchw;
            for (const auto& in : node.inputs) {
                const TensorSpec& t = out.tensor(in);
                if (t.shape.size() == 4 && t.layout != Layout::none) {
                    inherited = t.layout;
                    break;
                }
            }
            result.layout = inherited;
        }
    }
    return out;
}

namespace {

void check_node(const Graph& g, const OpNode& node, std::vector<std::string>& report) {
    Arity arity = arity_of(node.kind);
    if (node.inputs.size() < arity.min_in || node.inputs.size() > arity.max_in)
        report.push_back("node '" + node.id + "': arity " +
                         std::to_string(node.inputs.size()) + " invalid for kind '" +
                         std::string(to_string(node.kind)) + "'");
    if (node.outputs.size() != arity.outs)
        report.push_back("node '" + node.id + "': expected " + std::to_string(arity.outs) +
                         " outputs, has " + std::to_string(node.outputs.size()));

    if (attr_int(node.attrs, "stride", 1) < 1)
        report.push_back("node '" + node.id + "': stride must be >= 1");
    if (attr_int(node.attrs, "pad", 0) < 0)
        report.push_back("node '" + node.id + "': pad must be >= 0");

    if (node.impl == ImplBinding::fused_sequence && node.kind != OpKind::fused)
        report.push_back("node '" + node.id + "': fused_sequence binding on non-fused kind");
    if (node.kind == OpKind::fused && node.impl == ImplBinding::direct)
        report.push_back("node '" + node.id + "': fused kind requires a fused binding");

    if (node.impl == ImplBinding::winograd_f2x2_3x3) {
        const OpKind base = node.kind == OpKind::fused && !node.fused_kinds.empty()
                                ? node.fused_kinds[0]
                                : node.kind;
        bool ok = base == OpKind::conv2d && attr_int(node.attrs, "stride", 1) == 1 &&
                  attr_int(node.attrs, "groups", 1) == 1;
        if (ok && node.inputs.size() >= 2) {
            const TensorSpec* w = g.find_tensor(node.inputs[1]);
            if (!w || !w->has_shape()) {
                ok = false;
            } else {
                const bool nhwc = w->layout == Layout::nhwc;
                const int64_t kh = nhwc ? w->shape[1] : w->shape[2];
                const int64_t kw = nhwc ? w->shape[2] : w->shape[3];
                ok = kh == 3 && kw == 3;
            }
        }
        if (!ok)
            report.push_back("node '" + node.id +
                             "': winograd binding requires a 3x3 stride-1 conv2d");
    }
}

} // namespace

std::vector<std::string> validate_graph(const Graph& g) {
    std::vector<std::string> report;

    std::set<std::string> tensor_ids, node_ids;
    for (const auto& t : g.tensors) {
        if (!tensor_ids.insert(t.id).second)
            report.push_back("duplicate tensor id '" + t.id + "'");
        if (t.has_shape()) {
            if (t.shape.size() > 4)
                report.push_back("tensor '" + t.id + "': rank exceeds 4");
            for (int64_t d : t.shape) {
                if (d < 1) {
                    report.push_back("tensor '" + t.id + "': non-positive dim");
                    break;
                }
            }
        }
        if (t.layout != Layout::none && t.shape.size() != 4 && t.has_shape())
            report.push_back("tensor '" + t.id + "': layout set on rank-" +
                             std::to_string(t.shape.size()) + " tensor");
        if (!t.data.empty() && t.role != TensorRole::constant)
            report.push_back("tensor '" + t.id + "': inline data on non-constant role");
        if (!t.data.empty() && t.has_shape() &&
            static_cast<int64_t>(t.data.size()) != t.numel())
            report.push_back("tensor '" + t.id + "': inline data length mismatch");
    }
    for (const auto& n : g.nodes) {
        if (!node_ids.insert(n.id).second)
            report.push_back("duplicate node id '" + n.id + "'");
        if (tensor_ids.count(n.id))
            report.push_back("id '" + n.id + "' used for both a node and a tensor");
    }

    auto check_ref = [&](const std::string& owner, const std::string& id) {
        if (!tensor_ids.count(id))
            report.push_back(owner + " references undeclared tensor '" + id + "'");
    };
    for (const auto& n : g.nodes) {
        for (const auto& in : n.inputs) check_ref("node '" + n.id + "'", in);
        for (const auto& out : n.outputs) check_ref("node '" + n.id + "'", out);
    }
    for (const auto& id : g.inputs) check_ref("graph inputs", id);
    for (const auto& id : g.outputs) check_ref("graph outputs", id);
    for (const auto& id : g.params) check_ref("graph params", id);
    if (!report.empty()) return report;  // id errors make the rest unreliable

    // Producer discipline: activations and gradients have exactly one
    // producer; inputs, params, constants and optimizer state have none.
    std::map<std::string, int> producer_count;
    for (const auto& n : g.nodes) {
        for (const auto& out : n.outputs) ++producer_count[out];
    }
    for (const auto& t : g.tensors) {
        const int produced = producer_count.count(t.id) ? producer_count[t.id] : 0;
        const bool source_role =
            t.role == TensorRole::input || t.role == TensorRole::weight ||
            t.role == TensorRole::bias || t.role == TensorRole::constant ||
            t.role == TensorRole::optimizer_state;
        if (produced > 1)
            report.push_back("tensor '" + t.id + "' has multiple producers");
        if (source_role && produced > 0)
            report.push_back("tensor '" + t.id + "' with source role has a producer");
        if (!source_role && produced == 0)
            report.push_back("tensor '" + t.id + "' has no producer and no source role");
    }

    // Dead intermediates: produced activations/gradients that nothing reads
    // and that are not graph outputs.
    GraphIndex index(g);
    for (const auto& t : g.tensors) {
        if (t.role != TensorRole::activation && t.role != TensorRole::gradient) continue;
        if (g.is_output(t.id) || t.id == g.objective) continue;
        if (index.consumers_of(t.id).empty())
            report.push_back("tensor '" + t.id + "' is never consumed");
    }

    for (const auto& n : g.nodes) check_node(g, n, report);

    try {
        topo_sort(g);
    } catch (const Error&) {
        report.push_back("graph contains a cycle");
    }

    // Shape consistency (only meaningful when acyclic and ids resolve).
    if (report.empty()) {
        try {
            shape_infer(g);
        } catch (const Error& e) {
            report.push_back(std::string("shape inference failed: ") + e.what());
        }
    }
    return report;
}

} // namespace minitrain
