// SPDX-License-Identifier: Apache-2.0

#include "minitrain/planner.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace minitrain {

namespace {

bool is_persistent_role(TensorRole role) {
    return role == TensorRole::weight || role == TensorRole::bias ||
           role == TensorRole::constant || role == TensorRole::optimizer_state;
}

bool is_apply(OpKind kind) {
    return kind == OpKind::apply_sgd || kind == OpKind::apply_momentum;
}

int64_t winograd_workspace_bytes(const Graph& g, const OpNode& node) {
    Conv2dDims d = conv2d_dims(g, node);
    const DType dtype = g.tensor(node.outputs[0]).dtype;
    // One transformed input tile column (all input channels) plus an
    // accumulator tile; transient per-tile scratch, batch-independent.
    return static_cast<int64_t>(16 * (d.in_c + 2) * dtype_width(dtype));
}

// Kahn's algorithm over dataflow edges plus write-after-read edges for
// in-place parameter updates: an apply node runs only after every other
// reader of its parameter.
struct Scheduler {
    const Graph& g;
    std::map<std::string, size_t> node_pos;
    std::vector<std::vector<int>> succ;
    std::vector<int> indegree;
    std::map<std::string, std::vector<int>> consumers;
    std::map<std::string, int> producer;

    explicit Scheduler(const Graph& graph) : g(graph) {
        const size_t n = g.nodes.size();
        succ.resize(n);
        indegree.assign(n, 0);
        for (size_t i = 0; i < n; ++i) node_pos[g.nodes[i].id] = i;
        for (size_t i = 0; i < n; ++i) {
            for (const auto& out : g.nodes[i].outputs) producer[out] = static_cast<int>(i);
            for (const auto& in : g.nodes[i].inputs)
                consumers[in].push_back(static_cast<int>(i));
        }
        auto add_edge = [&](int from, int to) {
            if (from == to) return;
            succ[static_cast<size_t>(from)].push_back(to);
            ++indegree[static_cast<size_t>(to)];
        };
        for (size_t i = 0; i < n; ++i) {
            for (const auto& in : g.nodes[i].inputs) {
                auto it = producer.find(in);
                if (it != producer.end()) add_edge(it->second, static_cast<int>(i));
            }
        }
        for (size_t i = 0; i < n; ++i) {
            if (!is_apply(g.nodes[i].kind)) continue;
            const std::string& param = g.nodes[i].inputs[0];
            for (int reader : consumers[param]) {
                if (reader != static_cast<int>(i)) add_edge(reader, static_cast<int>(i));
            }
        }
    }

    std::vector<std::string> run(bool greedy_inplace) const {
        const size_t n = g.nodes.size();
        std::vector<int> remaining = indegree;
        std::vector<bool> done(n, false);
        // Remaining consumer counts drive the freed-bytes part of the score.
        std::map<std::string, int> uses_left;
        for (const auto& [id, list] : consumers) uses_left[id] = static_cast<int>(list.size());

        auto transient_bytes = [&](const std::string& id) -> int64_t {
            const TensorSpec& t = g.tensor(id);
            return is_persistent_role(t.role) ? 0 : t.byte_size();
        };
        auto unlocks_apply = [&](const OpNode& node) -> bool {
            if (node.outputs.empty()) return false;
            auto it = consumers.find(node.outputs[0]);
            if (it == consumers.end() || it->second.empty()) return false;
            for (int c : it->second) {
                if (!is_apply(g.nodes[static_cast<size_t>(c)].kind)) return false;
            }
            return true;
        };
        auto score = [&](size_t i) -> int64_t {
            const OpNode& node = g.nodes[i];
            int64_t out_bytes = 0;
            for (const auto& out : node.outputs) out_bytes += transient_bytes(out);
            int64_t freed = 0;
            for (const auto& in : node.inputs) {
                if (uses_left.at(in) == 1) freed += transient_bytes(in);
            }
            int64_t s = out_bytes - freed;
            if (unlocks_apply(node)) s -= out_bytes;
            return s;
        };

        std::vector<size_t> ready;
        for (size_t i = 0; i < n; ++i) {
            if (remaining[i] == 0) ready.push_back(i);
        }

        std::vector<std::string> order;
        order.reserve(n);
        while (!ready.empty()) {
            size_t best = ready.front();
            size_t best_at = 0;
            for (size_t k = 0; k < ready.size(); ++k) {
                const size_t cand = ready[k];
                const OpNode& cn = g.nodes[cand];
                const OpNode& bn = g.nodes[best];
                bool better;
                if (greedy_inplace) {
                    auto key = [&](const OpNode& node, size_t idx) {
                        int64_t apply_rank = is_apply(node.kind) ? 0 : 1;
                        int64_t sc = apply_rank == 0 ? 0 : score(idx);
                        int64_t ob = 0;
                        for (const auto& out : node.outputs) ob += transient_bytes(out);
                        return std::make_tuple(apply_rank, sc, ob, node.id);
                    };
                    better = key(cn, cand) < key(bn, best);
                } else {
                    auto key = [&](const OpNode& node) {
                        return std::make_tuple(is_apply(node.kind) ? 1 : 0, node.id);
                    };
                    better = key(cn) < key(bn);
                }
                if (k == 0 || better) {
                    best = cand;
                    best_at = k;
                }
            }
            ready.erase(ready.begin() + static_cast<long>(best_at));
            const OpNode& node = g.nodes[best];
            order.push_back(node.id);
            done[best] = true;
            for (const auto& in : node.inputs) --uses_left[in];
            for (int s : succ[best]) {
                if (--remaining[static_cast<size_t>(s)] == 0)
                    ready.push_back(static_cast<size_t>(s));
            }
        }
        if (order.size() != n)
            throw Error(ErrorKind::semantic, "schedule failed: graph contains a cycle");
        return order;
    }
};

} // namespace

std::map<std::string, Lifetime> tensor_lifetimes(const std::vector<std::string>& steps,
                                                 const Graph& g) {
    std::map<std::string, int> step_of;
    for (size_t i = 0; i < steps.size(); ++i) step_of[steps[i]] = static_cast<int>(i);
    const int last_step = steps.empty() ? 0 : static_cast<int>(steps.size()) - 1;

    std::map<std::string, Lifetime> life;
    std::map<std::string, int> def_at;
    for (const auto& t : g.tensors) {
        if (is_persistent_role(t.role)) {
            life[t.id] = {0, last_step};
        } else if (t.role == TensorRole::input || g.is_input(t.id)) {
            def_at[t.id] = 0;
            life[t.id] = {0, 0};
        }
    }
    for (const auto& node_id : steps) {
        const OpNode* node = g.find_node(node_id);
        if (!node) throw Error(ErrorKind::semantic, "schedule names unknown node '" + node_id + "'");
        const int step = step_of[node_id];
        for (const auto& out : node->outputs) {
            const TensorSpec& t = g.tensor(out);
            if (is_persistent_role(t.role)) continue;
            def_at[out] = step;
            auto& lt = life[out];
            lt.first_def = step;
            lt.last_use = std::max(lt.last_use, step);
        }
    }
    for (const auto& node_id : steps) {
        const OpNode* node = g.find_node(node_id);
        const int step = step_of[node_id];
        for (const auto& in : node->inputs) {
            const TensorSpec& t = g.tensor(in);
            if (is_persistent_role(t.role)) continue;
            auto it = def_at.find(in);
            if (it == def_at.end() || it->second > step)
                throw Error(ErrorKind::semantic, "schedule uses tensor '" + in +
                                                     "' before it is defined (node '" +
                                                     node_id + "')");
            life[in].last_use = std::max(life[in].last_use, step);
        }
    }
    // Graph outputs and the objective must survive to the end of the plan.
    auto extend = [&](const std::string& id) {
        auto it = life.find(id);
        if (it != life.end()) it->second.last_use = last_step;
    };
    for (const auto& id : g.outputs) extend(id);
    if (!g.objective.empty()) extend(g.objective);
    return life;
}

std::pair<std::map<std::string, BufferSlot>, int64_t> assign_buffers(
    const std::map<std::string, Lifetime>& lifetimes,
    const std::map<std::string, int64_t>& sizes) {
    std::vector<std::string> order;
    for (const auto& [id, size] : sizes) {
        (void)size;
        if (!lifetimes.count(id))
            throw Error(ErrorKind::semantic, "no lifetime for tensor '" + id + "'");
        order.push_back(id);
    }
    std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        const int64_t sa = sizes.at(a), sb = sizes.at(b);
        if (sa != sb) return sa > sb;
        return a < b;
    });

    std::map<std::string, BufferSlot> placed;
    int64_t arena = 0;
    for (const auto& id : order) {
        const Lifetime& lt = lifetimes.at(id);
        const int64_t size = sizes.at(id);
        // Slots whose lifetimes overlap this one constrain the placement.
        std::vector<BufferSlot> busy;
        for (const auto& [other, slot] : placed) {
            const Lifetime& ol = lifetimes.at(other);
            if (lt.first_def <= ol.last_use && ol.first_def <= lt.last_use)
                busy.push_back(slot);
        }
        std::sort(busy.begin(), busy.end(),
                  [](const BufferSlot& a, const BufferSlot& b) { return a.offset < b.offset; });
        // Best fit: smallest gap that holds the tensor; the open-ended tail
        // gap is the fallback.
        int64_t best_offset = -1;
        int64_t best_leftover = std::numeric_limits<int64_t>::max();
        int64_t cursor = 0;
        for (const auto& slot : busy) {
            if (slot.offset > cursor) {
                const int64_t gap = slot.offset - cursor;
                if (gap >= size && gap - size < best_leftover) {
                    best_offset = cursor;
                    best_leftover = gap - size;
                }
            }
            cursor = std::max(cursor, slot.offset + slot.size);
        }
        if (best_offset < 0) best_offset = cursor;
        placed[id] = {best_offset, size};
        arena = std::max(arena, best_offset + size);
    }
    return {placed, arena};
}

namespace {

struct PlanStats {
    int64_t peak_live = 0;  // transients only
    int peak_step = -1;
    int64_t param_grad_peak = 0;
    std::vector<int64_t> live_per_step;  // transients only
};

PlanStats live_stats(const Graph& g, const std::vector<std::string>& steps,
                     const std::map<std::string, Lifetime>& lifetimes,
                     const std::map<std::string, int64_t>& sizes,
                     const std::set<std::string>& param_grads) {
    PlanStats stats;
    const size_t n = std::max<size_t>(steps.size(), 1);
    stats.live_per_step.assign(n, 0);
    std::vector<int64_t> grad_per_step(n, 0);
    for (const auto& [id, size] : sizes) {
        const Lifetime& lt = lifetimes.at(id);
        for (int s = lt.first_def; s <= lt.last_use && s < static_cast<int>(n); ++s) {
            stats.live_per_step[static_cast<size_t>(s)] += size;
            if (param_grads.count(id)) grad_per_step[static_cast<size_t>(s)] += size;
        }
    }
    for (size_t s = 0; s < n; ++s) {
        if (stats.live_per_step[s] > stats.peak_live) {
            stats.peak_live = stats.live_per_step[s];
            stats.peak_step = static_cast<int>(s);
        }
        stats.param_grad_peak = std::max(stats.param_grad_peak, grad_per_step[s]);
    }
    return stats;
}

} // namespace

ExecutionPlan build_plan(const Graph& g, const PlanRequest& request) {
    Scheduler scheduler(g);
    std::vector<std::string> steps = scheduler.run(false);
    bool reordered = false;

    std::set<std::string> param_grads;
    {
        GraphIndex index(g);
        for (const auto& t : g.tensors) {
            if (t.role != TensorRole::gradient) continue;
            for (int c : index.consumers_of(t.id)) {
                if (is_apply(g.nodes[static_cast<size_t>(c)].kind)) {
                    param_grads.insert(t.id);
                    break;
                }
            }
        }
    }

    auto transient_sizes = [&](const std::vector<std::string>& order,
                               std::map<std::string, Lifetime>& lifetimes) {
        lifetimes = tensor_lifetimes(order, g);
        std::map<std::string, int> step_of;
        for (size_t i = 0; i < order.size(); ++i) step_of[order[i]] = static_cast<int>(i);
        std::map<std::string, int64_t> sizes;
        for (const auto& t : g.tensors) {
            if (is_persistent_role(t.role)) continue;
            if (!lifetimes.count(t.id)) continue;  // dead in this schedule
            sizes[t.id] = t.byte_size();
        }
        // Winograd scratch lives exactly for its node's step.
        for (const auto& node : g.nodes) {
            if (node.impl != ImplBinding::winograd_f2x2_3x3) continue;
            const std::string ws_id = node.id + "#ws";
            const int step = step_of.at(node.id);
            lifetimes[ws_id] = {step, step};
            sizes[ws_id] = winograd_workspace_bytes(g, node);
        }
        return sizes;
    };

    std::map<std::string, Lifetime> lifetimes;
    std::map<std::string, int64_t> sizes = transient_sizes(steps, lifetimes);
    PlanStats stats = live_stats(g, steps, lifetimes, sizes, param_grads);

    if (request.reorder) {
        std::vector<std::string> greedy = scheduler.run(true);
        std::map<std::string, Lifetime> glife;
        std::map<std::string, int64_t> gsizes = transient_sizes(greedy, glife);
        PlanStats gstats = live_stats(g, greedy, glife, gsizes, param_grads);
        // Reordering must never worsen the plan; keep whichever schedule
        // peaks lower, preferring the reordered one on ties.
        if (gstats.peak_live <= stats.peak_live) {
            steps = std::move(greedy);
            lifetimes = std::move(glife);
            sizes = std::move(gsizes);
            stats = gstats;
            reordered = true;
        }
    }

    ExecutionPlan plan;
    plan.steps = steps;
    plan.reordered = reordered;
    plan.prepack = g.prepack;

    auto [buffers, arena] = assign_buffers(lifetimes, sizes);
    plan.buffer_of = std::move(buffers);
    plan.arena_bytes = arena;

    for (const auto& t : g.tensors) {
        if (is_persistent_role(t.role)) {
            plan.persistent_set.insert(t.id);
            plan.persistent_bytes += t.byte_size();
        }
    }
    for (const auto& node : g.nodes) {
        if (node.impl == ImplBinding::winograd_f2x2_3x3)
            plan.workspace_bytes[node.id] = winograd_workspace_bytes(g, node);
    }

    plan.peak_live_bytes = plan.persistent_bytes + stats.peak_live;
    plan.peak_bytes = plan.persistent_bytes + plan.arena_bytes;
    plan.peak_step = stats.peak_step;
    plan.param_grad_peak_bytes = stats.param_grad_peak;
    plan.live_bytes_per_step.reserve(stats.live_per_step.size());
    for (int64_t v : stats.live_per_step)
        plan.live_bytes_per_step.push_back(plan.persistent_bytes + v);

    // Category breakdown at the peak step: persistent tensors always count,
    // transients count when live at that step.
    std::map<std::string, int64_t> cats{{"weights", 0},
                                        {"activations", 0},
                                        {"gradients", 0},
                                        {"optimizer_state", 0}};
    for (const auto& t : g.tensors) {
        if (t.role == TensorRole::weight || t.role == TensorRole::bias ||
            t.role == TensorRole::constant) {
            cats["weights"] += t.byte_size();
        } else if (t.role == TensorRole::optimizer_state) {
            cats["optimizer_state"] += t.byte_size();
        }
    }
    if (stats.peak_step >= 0) {
        for (const auto& [id, size] : sizes) {
            const Lifetime& lt = lifetimes.at(id);
            if (lt.first_def > stats.peak_step || lt.last_use < stats.peak_step) continue;
            const TensorSpec* t = g.find_tensor(id);
            if (!t) {
                cats["activations"] += size;  // workspace
            } else if (t->role == TensorRole::gradient) {
                cats["gradients"] += size;
            } else {
                cats["activations"] += size;
            }
        }
    }
    plan.category_bytes = std::move(cats);
    return plan;
}

MemoryReport memory_report(const ExecutionPlan& plan, const Graph& /*g*/, int64_t batch,
                           const std::string& scheme_id) {
    MemoryReport r;
    r.scheme_id = scheme_id;
    r.batch = batch;
    r.peak_bytes = plan.peak_bytes;
    r.arena_bytes = plan.arena_bytes;
    r.persistent_bytes = plan.persistent_bytes;
    r.peak_live_bytes = plan.peak_live_bytes;
    r.param_grad_peak_bytes = plan.param_grad_peak_bytes;
    r.category_bytes = plan.category_bytes;
    r.live_bytes_per_step = plan.live_bytes_per_step;
    return r;
}

std::string MemoryReport::to_json() const {
    nlohmann::json j;
    j["scheme"] = scheme_id;
    j["batch"] = batch;
    j["peak_bytes"] = peak_bytes;
    j["arena_bytes"] = arena_bytes;
    j["persistent_bytes"] = persistent_bytes;
    j["peak_live_bytes"] = peak_live_bytes;
    j["param_grad_peak_bytes"] = param_grad_peak_bytes;
    j["category_bytes"] = category_bytes;
    j["live_bytes_per_step"] = live_bytes_per_step;
    return j.dump(2) + "\n";
}

std::string MemoryReport::to_text() const {
    std::ostringstream os;
    os << "scheme: " << (scheme_id.empty() ? "(full)" : scheme_id)
       << "  batch: " << batch << "\n";
    os << std::left << std::setw(18) << "category" << std::right << std::setw(14)
       << "bytes" << "\n";
    for (const auto& [name, bytes] : category_bytes)
        os << std::left << std::setw(18) << name << std::right << std::setw(14) << bytes
           << "\n";
    os << std::left << std::setw(18) << "peak" << std::right << std::setw(14)
       << peak_bytes << "\n";
    return os.str();
}

} // namespace minitrain
