// SPDX-License-Identifier: Apache-2.0
//
// Deterministic reference interpreter for execution plans. Kernels are
// plain loop nests with f64 accumulation; two runs with identical seeds and
// inputs are bitwise identical.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "minitrain/graph.hpp"
#include "minitrain/planner.hpp"

namespace minitrain {

struct TensorValue {
    TensorSpec spec;
    std::vector<float> f32;
    std::vector<double> f64;

    static TensorValue zeros(const TensorSpec& spec);
    static TensorValue from_doubles(const TensorSpec& spec, std::vector<double> values);

    int64_t numel() const { return spec.numel(); }
    double get(int64_t i) const {
        return spec.dtype == DType::f32 ? static_cast<double>(f32[static_cast<size_t>(i)])
                                        : f64[static_cast<size_t>(i)];
    }
    void set(int64_t i, double v) {
        if (spec.dtype == DType::f32)
            f32[static_cast<size_t>(i)] = static_cast<float>(v);
        else
            f64[static_cast<size_t>(i)] = v;
    }
};

struct TrainState {
    std::map<std::string, TensorValue> params;
    std::map<std::string, TensorValue> optimizer_state;
    int64_t step_count = 0;
    uint64_t rng_seed = 0;
};

// Seeded parameter initialization: weights uniform(-s, s) with
// s = 1/sqrt(fan_in) drawn in canonical coordinate order (layout-invariant),
// biases and optimizer state zero.
TrainState init_state(const Graph& g, uint64_t seed);

struct ExecOptions {
    bool check_finite = true;
    // Test hook: scale the named tensor after it is produced. Lets the
    // verifier prove it catches a corrupted gradient rule.
    std::string fault_tensor;
    double fault_factor = 1.0;
};

class Executor {
public:
    Executor(Graph graph, ExecutionPlan plan, ExecOptions opt = {});

    // Binds parameters/optimizer state and runs the plan's prepack steps
    // (winograd weight transforms). The state must outlive the executor.
    void bind_state(TrainState& state);

    // Executes forward nodes only (skips gradient producers and parameter
    // updates). Returns the graph outputs; the objective value, when
    // present, is written to loss_out.
    std::map<std::string, TensorValue> run_forward(
        const std::map<std::string, TensorValue>& inputs, double* loss_out = nullptr);

    // Executes the whole plan: forward, backward and in-place updates.
    // Returns the pre-update loss.
    double run_train_step(const std::map<std::string, TensorValue>& batch);

    // Tensors to copy out while running (gradients die early in reordered
    // plans; capturing is the only way to observe them).
    void capture(const std::string& tensor_id) { capture_set_.insert(tensor_id); }
    const TensorValue& captured(const std::string& tensor_id) const;

    const Graph& graph() const { return graph_; }
    const ExecutionPlan& plan() const { return plan_; }

private:
    void run_steps(bool training, const std::map<std::string, TensorValue>& inputs);
    TensorValue& storage(const std::string& tensor_id);
    void execute_node(const OpNode& node, bool training);
    void run_prepack();

    Graph graph_;
    ExecutionPlan plan_;
    ExecOptions opt_;
    TrainState* state_ = nullptr;
    std::map<std::string, TensorValue> constants_;  // inline data + prepacked
    std::map<std::string, TensorValue> transients_;
    std::set<std::string> capture_set_;
    std::map<std::string, TensorValue> captured_;
};

} // namespace minitrain
