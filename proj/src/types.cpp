// SPDX-License-Identifier: Apache-2.0

#include "minitrain/types.hpp"

namespace minitrain {

std::size_t dtype_width(DType t) {
    return t == DType::f32 ? 4 : 8;
}

std::string_view to_string(DType t) {
    return t == DType::f32 ? "f32" : "f64";
}

std::string_view to_string(Layout l) {
    switch (l) {
        case Layout::none: return "none";
        case Layout::nchw: return "NCHW";
        case Layout::nhwc: return "NHWC";
    }
    return "none";
}

std::string_view to_string(TensorRole r) {
    switch (r) {
        case TensorRole::input: return "input";
        case TensorRole::weight: return "weight";
        case TensorRole::bias: return "bias";
        case TensorRole::activation: return "activation";
        case TensorRole::gradient: return "gradient";
        case TensorRole::optimizer_state: return "optimizer_state";
        case TensorRole::constant: return "constant";
    }
    return "activation";
}

std::string_view to_string(OpKind k) {
    switch (k) {
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::conv2d: return "conv2d";
        case OpKind::dwconv2d: return "dwconv2d";
        case OpKind::conv2d_input_grad: return "conv2d_input_grad";
        case OpKind::conv2d_weight_grad: return "conv2d_weight_grad";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::relu: return "relu";
        case OpKind::relu6: return "relu6";
        case OpKind::relu_grad_mask: return "relu_grad_mask";
        case OpKind::reduce_sum: return "reduce_sum";
        case OpKind::avgpool2d: return "avgpool2d";
        case OpKind::reshape: return "reshape";
        case OpKind::slice: return "slice";
        case OpKind::concat: return "concat";
        case OpKind::softmax_ce_loss: return "softmax_ce_loss";
        case OpKind::softmax_ce_grad: return "softmax_ce_grad";
        case OpKind::mse_loss: return "mse_loss";
        case OpKind::mse_grad: return "mse_grad";
        case OpKind::apply_sgd: return "apply_sgd";
        case OpKind::apply_momentum: return "apply_momentum";
        case OpKind::fused: return "fused";
    }
    return "add";
}

std::string_view to_string(ImplBinding b) {
    switch (b) {
        case ImplBinding::direct: return "direct";
        case ImplBinding::winograd_f2x2_3x3: return "winograd_f2x2_3x3";
        case ImplBinding::fused_sequence: return "fused_sequence";
    }
    return "direct";
}

namespace {

[[noreturn]] void unknown(const char* what, std::string_view s) {
    throw Error(ErrorKind::parse,
                std::string("unknown ") + what + ": '" + std::string(s) + "'");
}

} // namespace

DType dtype_from_string(std::string_view s) {
    if (s == "f32") return DType::f32;
    if (s == "f64") return DType::f64;
    unknown("dtype", s);
}

Layout layout_from_string(std::string_view s) {
    if (s == "none" || s.empty()) return Layout::none;
    if (s == "NCHW") return Layout::nchw;
    if (s == "NHWC") return Layout::nhwc;
    unknown("layout", s);
}

TensorRole role_from_string(std::string_view s) {
    if (s == "input") return TensorRole::input;
    if (s == "weight") return TensorRole::weight;
    if (s == "bias") return TensorRole::bias;
    if (s == "activation") return TensorRole::activation;
    if (s == "gradient") return TensorRole::gradient;
    if (s == "optimizer_state") return TensorRole::optimizer_state;
    if (s == "constant") return TensorRole::constant;
    unknown("tensor role", s);
}

OpKind op_kind_from_string(std::string_view s) {
    static const std::pair<std::string_view, OpKind> table[] = {
        {"matmul", OpKind::matmul},
        {"transpose", OpKind::transpose},
        {"conv2d", OpKind::conv2d},
        {"dwconv2d", OpKind::dwconv2d},
        {"conv2d_input_grad", OpKind::conv2d_input_grad},
        {"conv2d_weight_grad", OpKind::conv2d_weight_grad},
        {"add", OpKind::add},
        {"mul", OpKind::mul},
        {"scale", OpKind::scale},
        {"relu", OpKind::relu},
        {"relu6", OpKind::relu6},
        {"relu_grad_mask", OpKind::relu_grad_mask},
        {"reduce_sum", OpKind::reduce_sum},
        {"avgpool2d", OpKind::avgpool2d},
        {"reshape", OpKind::reshape},
        {"slice", OpKind::slice},
        {"concat", OpKind::concat},
        {"softmax_ce_loss", OpKind::softmax_ce_loss},
        {"softmax_ce_grad", OpKind::softmax_ce_grad},
        {"mse_loss", OpKind::mse_loss},
        {"mse_grad", OpKind::mse_grad},
        {"apply_sgd", OpKind::apply_sgd},
        {"apply_momentum", OpKind::apply_momentum},
        {"fused", OpKind::fused},
    };
    for (const auto& [name, kind] : table) {
        if (name == s) return kind;
    }
    unknown("op kind", s);
}

ImplBinding impl_binding_from_string(std::string_view s) {
    if (s == "direct") return ImplBinding::direct;
    if (s == "winograd_f2x2_3x3") return ImplBinding::winograd_f2x2_3x3;
    if (s == "fused_sequence") return ImplBinding::fused_sequence;
    unknown("impl binding", s);
}

} // namespace minitrain
