// SPDX-License-Identifier: Apache-2.0
//
// Static memory planner: schedules a graph, traces tensor lifetimes,
// packs transient buffers into one arena and reports peak memory by
// category.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "minitrain/graph.hpp"

namespace minitrain {

struct BufferSlot {
    int64_t offset = 0;
    int64_t size = 0;
};

struct Lifetime {
    int first_def = 0;
    int last_use = 0;
};

struct ExecutionPlan {
    std::vector<std::string> steps;
    std::map<std::string, BufferSlot> buffer_of;  // transient tensors only
    std::set<std::string> persistent_set;         // params, state, constants
    std::vector<Prepack> prepack;
    std::map<std::string, int64_t> workspace_bytes;  // node id -> scratch bytes

    int64_t arena_bytes = 0;
    int64_t persistent_bytes = 0;
    // persistent + max over steps of the live transient byte sum; the
    // fragmentation-free figure the arena packing is measured against.
    int64_t peak_live_bytes = 0;
    // persistent + arena: what a runtime actually reserves.
    int64_t peak_bytes = 0;
    int peak_step = -1;
    std::map<std::string, int64_t> category_bytes;  // at peak step
    // Max over steps of simultaneously live parameter-gradient bytes.
    int64_t param_grad_peak_bytes = 0;
    std::vector<int64_t> live_bytes_per_step;  // persistent included
    bool reordered = false;
};

struct PlanRequest {
    // Schedule parameter updates at the earliest point after the gradient's
    // last consumer instead of after the whole backward pass.
    bool reorder = false;
};

// Lifetime of every tensor over a fixed schedule. Persistent tensors span
// the whole program; tensors consumed by backward nodes extend to their
// last backward consumer. Throws on use-before-def.
std::map<std::string, Lifetime> tensor_lifetimes(const std::vector<std::string>& steps,
                                                 const Graph& g);

// Greedy best-fit by decreasing size. Returns offsets plus the arena size.
std::pair<std::map<std::string, BufferSlot>, int64_t> assign_buffers(
    const std::map<std::string, Lifetime>& lifetimes,
    const std::map<std::string, int64_t>& sizes);

ExecutionPlan build_plan(const Graph& g, const PlanRequest& request = {});

struct MemoryReport {
    std::string scheme_id;
    int64_t batch = 1;
    int64_t peak_bytes = 0;
    int64_t arena_bytes = 0;
    int64_t persistent_bytes = 0;
    int64_t peak_live_bytes = 0;
    int64_t param_grad_peak_bytes = 0;
    std::map<std::string, int64_t> category_bytes;
    std::vector<int64_t> live_bytes_per_step;

    std::string to_json() const;
    std::string to_text() const;
};

MemoryReport memory_report(const ExecutionPlan& plan, const Graph& g, int64_t batch,
                           const std::string& scheme_id = "");

} // namespace minitrain
