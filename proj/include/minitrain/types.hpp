// SPDX-License-Identifier: Apache-2.0
//
// Shared enums and error type for the training compiler.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace minitrain {

enum class DType { f32, f64 };
enum class Layout { none, nchw, nhwc };

enum class TensorRole {
    input,
    weight,
    bias,
    activation,
    gradient,
    optimizer_state,
    constant,
};

enum class OpKind {
    matmul,
    transpose,
    conv2d,
    dwconv2d,
    conv2d_input_grad,
    conv2d_weight_grad,
    add,
    mul,
    scale,
    relu,
    relu6,
    relu_grad_mask,
    reduce_sum,
    avgpool2d,
    reshape,
    slice,
    concat,
    softmax_ce_loss,
    softmax_ce_grad,
    mse_loss,
    mse_grad,
    apply_sgd,
    apply_momentum,
    fused,
};

enum class ImplBinding { direct, winograd_f2x2_3x3, fused_sequence };

enum class ErrorKind { parse, semantic, shape, unsupported, numeric, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

std::size_t dtype_width(DType t);

std::string_view to_string(DType t);
std::string_view to_string(Layout l);
std::string_view to_string(TensorRole r);
std::string_view to_string(OpKind k);
std::string_view to_string(ImplBinding b);

DType dtype_from_string(std::string_view s);
Layout layout_from_string(std::string_view s);
TensorRole role_from_string(std::string_view s);
OpKind op_kind_from_string(std::string_view s);
ImplBinding impl_binding_from_string(std::string_view s);

} // namespace minitrain
