// SPDX-License-Identifier: Apache-2.0
//
// Compile-time reverse-mode differentiation. The backward graph is built
// from the same primitive operator set as the forward pass; no runtime
// tape exists.

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "minitrain/graph.hpp"

namespace minitrain {

enum class LossKind { softmax_cross_entropy, mse };

struct LossSpec {
    LossKind kind = LossKind::mse;
    std::string prediction;
    std::string target;  // must be declared as a graph input
};

// Returns g plus one loss node producing the scalar objective. Errors on
// shape incompatibility or if an objective is already present.
Graph attach_loss(const Graph& g, const LossSpec& loss);

struct TrainingGraph {
    Graph base;  // forward + loss
    std::vector<OpNode> backward_nodes;
    std::vector<TensorSpec> backward_tensors;  // gradients + helper constants
    std::map<std::string, std::string> grad_of;        // param -> gradient tensor
    std::map<std::string, std::string> input_grad_of;  // activation/input -> gradient
    // Forward tensors (activations and batch inputs) read by backward nodes.
    std::set<std::string> saved_set;

    // Forward and backward as one valid graph; unconsumed gradients are
    // exposed as outputs until an optimizer pass claims them.
    Graph merged() const;
};

// Reverse-topological expansion from the objective. Throws an unsupported
// Error if a reachable node kind has no gradient rule.
TrainingGraph derive_backward(const Graph& g);

// Chain-rule expansion for one node. `upstream` is the gradient of the
// node's output; partials maps each differentiable input to its gradient
// contribution. Exposed for rule-level tests.
struct GradExpansion {
    std::vector<OpNode> nodes;
    std::vector<TensorSpec> tensors;
    std::map<std::string, std::string> input_partials;
};
GradExpansion gradient_expansion(const Graph& g, const OpNode& node,
                                 const std::string& upstream);

} // namespace minitrain
