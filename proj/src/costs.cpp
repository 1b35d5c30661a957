// SPDX-License-Identifier: Apache-2.0

#include "minitrain/costs.hpp"

namespace minitrain {

namespace {

int64_t numel_of(const Graph& g, const std::string& id) {
    return g.tensor(id).numel();
}

int64_t matmul_flops(const Graph& g, const OpNode& node) {
    const TensorSpec& x = g.tensor(node.inputs[0]);
    const bool ta = attr_int(node.attrs, "transpose_a", 0) != 0;
    const int64_t m = ta ? x.shape[1] : x.shape[0];
    const int64_t k = ta ? x.shape[0] : x.shape[1];
    const int64_t n = g.tensor(node.outputs[0]).shape[1];
    int64_t flops = 2 * m * k * n;
    if (node.inputs.size() == 3) flops += m * n;
    return flops;
}

int64_t conv_flops(const Graph& g, const OpNode& node) {
    Conv2dDims d = conv2d_dims(g, node);
    const int64_t in_per_group = d.in_c / d.groups;
    int64_t flops = 2 * d.batch * d.out_c * d.out_h * d.out_w * in_per_group * d.kh * d.kw;
    if ((node.kind == OpKind::conv2d || node.kind == OpKind::dwconv2d) &&
        node.inputs.size() == 3)
        flops += d.batch * d.out_c * d.out_h * d.out_w;
    return flops;
}

} // namespace

int64_t node_flops(const Graph& g, const OpNode& node) {
    switch (node.kind) {
        case OpKind::matmul:
            return matmul_flops(g, node);
        case OpKind::conv2d:
        case OpKind::dwconv2d:
        case OpKind::conv2d_input_grad:
        case OpKind::conv2d_weight_grad:
            return conv_flops(g, node);
        case OpKind::add:
        case OpKind::mul:
        case OpKind::scale:
        case OpKind::relu:
        case OpKind::relu6:
        case OpKind::relu_grad_mask:
            return numel_of(g, node.outputs[0]);
        case OpKind::reduce_sum:
            return numel_of(g, node.inputs[0]);
        case OpKind::avgpool2d:
            return numel_of(g, node.inputs[0]) + numel_of(g, node.outputs[0]);
        case OpKind::transpose:
        case OpKind::reshape:
        case OpKind::slice:
        case OpKind::concat:
            return 0;
        case OpKind::softmax_ce_loss:
            return 5 * numel_of(g, node.inputs[0]);
        case OpKind::softmax_ce_grad:
            return 2 * numel_of(g, node.inputs[0]);
        case OpKind::mse_loss:
            return 3 * numel_of(g, node.inputs[0]);
        case OpKind::mse_grad:
            return 2 * numel_of(g, node.inputs[0]);
        case OpKind::apply_sgd:
            return 2 * numel_of(g, node.inputs[1]);
        case OpKind::apply_momentum:
            return 4 * numel_of(g, node.inputs[1]);
        case OpKind::fused: {
            // The linear head (if any) plus one elementwise pass per
            // remaining step.
            int64_t flops = 0;
            for (size_t i = 0; i < node.fused_kinds.size(); ++i) {
                OpKind k = node.fused_kinds[i];
                if (i == 0 && (k == OpKind::conv2d || k == OpKind::dwconv2d)) {
                    flops += conv_flops(g, node);
                } else if (i == 0 && k == OpKind::matmul) {
                    flops += matmul_flops(g, node);
                } else {
                    flops += numel_of(g, node.outputs[0]);
                }
            }
            return flops;
        }
    }
    return 0;
}

int64_t graph_flops(const Graph& g) {
    int64_t total = 0;
    for (const auto& node : g.nodes) total += node_flops(g, node);
    return total;
}

int64_t conv_multiplies(const Graph& g, const OpNode& node) {
    const OpKind base =
        node.kind == OpKind::fused && !node.fused_kinds.empty() ? node.fused_kinds[0] : node.kind;
    if (base != OpKind::conv2d && base != OpKind::dwconv2d)
        throw Error(ErrorKind::semantic,
                    "node '" + node.id + "' is not a convolution");
    Conv2dDims d = conv2d_dims(g, node);
    const int64_t in_per_group = d.in_c / d.groups;
    if (node.impl == ImplBinding::winograd_f2x2_3x3) {
        const int64_t tiles_h = (d.out_h + 1) / 2;
        const int64_t tiles_w = (d.out_w + 1) / 2;
        return d.batch * tiles_h * tiles_w * 16 * d.out_c * in_per_group;
    }
    return d.batch * d.out_c * d.out_h * d.out_w * in_per_group * d.kh * d.kw;
}

} // namespace minitrain
