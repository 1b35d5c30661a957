// SPDX-License-Identifier: Apache-2.0

#include "minitrain/executor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace minitrain {

namespace {

// FNV-1a; std::hash is not specified to be stable, this is.
uint64_t stable_hash(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ull) {}
    uint64_t next() {
        // splitmix64
        state += 0x9e3779b97f4a7c15ull;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

bool is_nhwc(const TensorSpec& t) { return t.layout == Layout::nhwc; }

// Activation index for logical (n, c, h, w) under the tensor's layout.
int64_t idx4(const TensorSpec& t, int64_t n, int64_t c, int64_t h, int64_t w) {
    if (is_nhwc(t)) {
        const int64_t H = t.shape[1], W = t.shape[2], C = t.shape[3];
        return ((n * H + h) * W + w) * C + c;
    }
    const int64_t C = t.shape[1], H = t.shape[2], W = t.shape[3];
    return ((n * C + c) * H + h) * W + w;
}

// Weight index for logical (o, i, kh, kw): OIHW canonically, OHWI in NHWC.
int64_t widx(const TensorSpec& w, int64_t o, int64_t i, int64_t kh, int64_t kw) {
    if (is_nhwc(w)) {
        const int64_t KH = w.shape[1], KW = w.shape[2], I = w.shape[3];
        return ((o * KH + kh) * KW + kw) * I + i;
    }
    const int64_t I = w.shape[1], KH = w.shape[2], KW = w.shape[3];
    return ((o * I + i) * KH + kh) * KW + kw;
}

std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
    std::vector<int64_t> s(shape.size(), 1);
    for (size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

[[noreturn]] void exec_error(const std::string& node_id, const std::string& msg) {
    throw Error(ErrorKind::numeric, "node '" + node_id + "': " + msg);
}

} // namespace

TensorValue TensorValue::zeros(const TensorSpec& spec) {
    TensorValue v;
    v.spec = spec;
    if (spec.dtype == DType::f32)
        v.f32.assign(static_cast<size_t>(spec.numel()), 0.0f);
    else
        v.f64.assign(static_cast<size_t>(spec.numel()), 0.0);
    return v;
}

TensorValue TensorValue::from_doubles(const TensorSpec& spec, std::vector<double> values) {
    TensorValue v = zeros(spec);
    for (int64_t i = 0; i < spec.numel(); ++i) v.set(i, values[static_cast<size_t>(i)]);
    return v;
}

TrainState init_state(const Graph& g, uint64_t seed) {
    TrainState state;
    state.rng_seed = seed;
    GraphIndex index(g);

    auto fan_in_of = [&](const TensorSpec& t) -> int64_t {
        // Inputs feeding one output unit, read off the first consumer.
        for (int c : index.consumers_of(t.id)) {
            const OpNode& node = g.nodes[static_cast<size_t>(c)];
            OpKind kind = node.kind == OpKind::fused && !node.fused_kinds.empty()
                              ? node.fused_kinds[0]
                              : node.kind;
            if (node.inputs.size() >= 2 && node.inputs[1] == t.id) {
                if (kind == OpKind::conv2d || kind == OpKind::dwconv2d)
                    return std::max<int64_t>(1, t.numel() / t.shape[0]);
                if (kind == OpKind::matmul) {
                    const bool tb = attr_int(node.attrs, "transpose_b", 0) != 0;
                    return tb ? t.shape[1] : t.shape[0];
                }
            }
        }
        return std::max<int64_t>(1, t.numel() / t.shape[0]);
    };

    for (const auto& id : g.params) {
        const TensorSpec& t = g.tensor(id);
        if (!t.has_shape())
            throw Error(ErrorKind::shape, "param '" + id + "' has no shape");
        TensorValue v = TensorValue::zeros(t);
        if (t.role == TensorRole::weight) {
            const double s = 1.0 / std::sqrt(static_cast<double>(fan_in_of(t)));
            Rng rng(seed ^ stable_hash(id));
            if (t.shape.size() == 4 && is_nhwc(t)) {
                // Draw in canonical OIHW order so NCHW and NHWC plans see
                // the same logical parameters.
                const int64_t O = t.shape[0], KH = t.shape[1], KW = t.shape[2],
                              I = t.shape[3];
                for (int64_t o = 0; o < O; ++o)
                    for (int64_t i = 0; i < I; ++i)
                        for (int64_t kh = 0; kh < KH; ++kh)
                            for (int64_t kw = 0; kw < KW; ++kw)
                                v.set(widx(t, o, i, kh, kw), (2.0 * rng.uniform() - 1.0) * s);
            } else {
                for (int64_t i = 0; i < t.numel(); ++i)
                    v.set(i, (2.0 * rng.uniform() - 1.0) * s);
            }
        }
        state.params[id] = std::move(v);
    }
    for (const auto& t : g.tensors) {
        if (t.role == TensorRole::optimizer_state)
            state.optimizer_state[t.id] = TensorValue::zeros(t);
    }
    return state;
}

Executor::Executor(Graph graph, ExecutionPlan plan, ExecOptions opt)
    : graph_(std::move(graph)), plan_(std::move(plan)), opt_(std::move(opt)) {}

void Executor::bind_state(TrainState& state) {
    state_ = &state;
    constants_.clear();
    for (const auto& t : graph_.tensors) {
        if (t.role != TensorRole::constant) continue;
        if (!t.data.empty()) {
            constants_[t.id] = TensorValue::from_doubles(t, t.data);
        }
    }
    run_prepack();
}

void Executor::run_prepack() {
    for (const auto& pp : plan_.prepack) {
        auto it = state_->params.find(pp.src);
        if (it == state_->params.end())
            throw Error(ErrorKind::semantic, "prepack source '" + pp.src + "' not bound");
        const TensorValue& w = it->second;
        const TensorSpec& dst_spec = graph_.tensor(pp.dst);
        TensorValue out = TensorValue::zeros(dst_spec);
        if (pp.kind == Prepack::Kind::wino_weights) {
            // U = G g G^T per (out channel, in channel), G for F(2x2, 3x3).
            static const double G[4][3] = {
                {1.0, 0.0, 0.0}, {0.5, 0.5, 0.5}, {0.5, -0.5, 0.5}, {0.0, 0.0, 1.0}};
            const int64_t O = dst_spec.shape[0], I = dst_spec.shape[1];
            for (int64_t o = 0; o < O; ++o) {
                for (int64_t i = 0; i < I; ++i) {
                    double g3[3][3];
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            g3[a][b] = w.get(widx(w.spec, o, i, a, b));
                    double tmp[4][3];
                    for (int a = 0; a < 4; ++a)
                        for (int b = 0; b < 3; ++b)
                            tmp[a][b] = G[a][0] * g3[0][b] + G[a][1] * g3[1][b] +
                                        G[a][2] * g3[2][b];
                    for (int a = 0; a < 4; ++a)
                        for (int b = 0; b < 4; ++b) {
                            const double u = tmp[a][0] * G[b][0] + tmp[a][1] * G[b][1] +
                                             tmp[a][2] * G[b][2];
                            out.set(((o * I + i) * 4 + a) * 4 + b, u);
                        }
                }
            }
        } else {
            for (int64_t i = 0; i < w.numel(); ++i) out.set(i, w.get(i));
        }
        constants_[pp.dst] = std::move(out);
    }
}

TensorValue& Executor::storage(const std::string& tensor_id) {
    const TensorSpec& spec = graph_.tensor(tensor_id);
    switch (spec.role) {
        case TensorRole::weight:
        case TensorRole::bias: {
            auto it = state_->params.find(tensor_id);
            if (it == state_->params.end())
                throw Error(ErrorKind::semantic, "param '" + tensor_id + "' not bound");
            return it->second;
        }
        case TensorRole::optimizer_state: {
            auto it = state_->optimizer_state.find(tensor_id);
            if (it == state_->optimizer_state.end())
                throw Error(ErrorKind::semantic, "state '" + tensor_id + "' not bound");
            return it->second;
        }
        case TensorRole::constant: {
            auto it = constants_.find(tensor_id);
            if (it == constants_.end())
                throw Error(ErrorKind::semantic,
                            "constant '" + tensor_id + "' has no data and no prepack");
            return it->second;
        }
        default: {
            auto it = transients_.find(tensor_id);
            if (it == transients_.end())
                it = transients_.emplace(tensor_id, TensorValue::zeros(spec)).first;
            return it->second;
        }
    }
}

namespace {

void kernel_matmul(const OpNode& node, const TensorValue& x, const TensorValue& w,
                   const TensorValue* bias, TensorValue& y) {
    const bool ta = attr_int(node.attrs, "transpose_a", 0) != 0;
    const bool tb = attr_int(node.attrs, "transpose_b", 0) != 0;
    const int64_t m = y.spec.shape[0], n = y.spec.shape[1];
    const int64_t k = ta ? x.spec.shape[0] : x.spec.shape[1];
    const int64_t xs0 = x.spec.shape[1];
    const int64_t ws0 = w.spec.shape[1];
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                const double xv = ta ? x.get(p * xs0 + i) : x.get(i * xs0 + p);
                const double wv = tb ? w.get(j * ws0 + p) : w.get(p * ws0 + j);
                acc += xv * wv;
            }
            if (bias) acc += bias->get(j);
            y.set(i * n + j, acc);
        }
    }
}

void kernel_conv2d(const Graph& g, const OpNode& node, const TensorValue& x,
                   const TensorValue& w, const TensorValue* bias, TensorValue& y) {
    Conv2dDims d = conv2d_dims(g, node);
    const int64_t oc_per_group = d.out_c / d.groups;
    const int64_t ic_per_group = d.in_c / d.groups;
    for (int64_t n = 0; n < d.batch; ++n) {
        for (int64_t oc = 0; oc < d.out_c; ++oc) {
            const int64_t grp = oc / oc_per_group;
            for (int64_t oh = 0; oh < d.out_h; ++oh) {
                for (int64_t ow = 0; ow < d.out_w; ++ow) {
                    double acc = 0.0;
                    for (int64_t ic = 0; ic < ic_per_group; ++ic) {
                        const int64_t xc = grp * ic_per_group + ic;
                        for (int64_t kh = 0; kh < d.kh; ++kh) {
                            const int64_t h = oh * d.stride - d.pad + kh;
                            if (h < 0 || h >= d.in_h) continue;
                            for (int64_t kw = 0; kw < d.kw; ++kw) {
                                const int64_t iw = ow * d.stride - d.pad + kw;
                                if (iw < 0 || iw >= d.in_w) continue;
                                acc += x.get(idx4(x.spec, n, xc, h, iw)) *
                                       w.get(widx(w.spec, oc, ic, kh, kw));
                            }
                        }
                    }
                    if (bias) acc += bias->get(oc);
                    y.set(idx4(y.spec, n, oc, oh, ow), acc);
                }
            }
        }
    }
}

// F(2x2, 3x3): per 4x4 input tile, V = B^T d B; M = sum_ic U .* V;
// y = A^T M A. U comes prepacked as (O, I, 4, 4).
void kernel_conv2d_winograd(const Graph& g, const OpNode& node, const TensorValue& x,
                            const TensorValue& u, const TensorValue* bias,
                            TensorValue& y, double relu_cap, bool apply_relu) {
    Conv2dDims d = conv2d_dims(g, node);
    const int64_t tiles_h = (d.out_h + 1) / 2;
    const int64_t tiles_w = (d.out_w + 1) / 2;
    std::vector<double> v(static_cast<size_t>(16 * d.in_c));
    for (int64_t n = 0; n < d.batch; ++n) {
        for (int64_t th = 0; th < tiles_h; ++th) {
            for (int64_t tw = 0; tw < tiles_w; ++tw) {
                const int64_t h0 = th * 2 - d.pad;
                const int64_t w0 = tw * 2 - d.pad;
                for (int64_t ic = 0; ic < d.in_c; ++ic) {
                    double patch[4][4];
                    for (int a = 0; a < 4; ++a) {
                        for (int b = 0; b < 4; ++b) {
                            const int64_t h = h0 + a, iw = w0 + b;
                            patch[a][b] = (h < 0 || h >= d.in_h || iw < 0 || iw >= d.in_w)
                                              ? 0.0
                                              : x.get(idx4(x.spec, n, ic, h, iw));
                        }
                    }
                    // B^T d
                    double t[4][4];
                    for (int b = 0; b < 4; ++b) {
                        t[0][b] = patch[0][b] - patch[2][b];
                        t[1][b] = patch[1][b] + patch[2][b];
                        t[2][b] = patch[2][b] - patch[1][b];
                        t[3][b] = patch[1][b] - patch[3][b];
                    }
                    // (B^T d) B
                    double* vt = v.data() + ic * 16;
                    for (int a = 0; a < 4; ++a) {
                        vt[a * 4 + 0] = t[a][0] - t[a][2];
                        vt[a * 4 + 1] = t[a][1] + t[a][2];
                        vt[a * 4 + 2] = t[a][2] - t[a][1];
                        vt[a * 4 + 3] = t[a][1] - t[a][3];
                    }
                }
                for (int64_t oc = 0; oc < d.out_c; ++oc) {
                    double m[16] = {0};
                    for (int64_t ic = 0; ic < d.in_c; ++ic) {
                        const double* vt = v.data() + ic * 16;
                        const int64_t ubase = (oc * d.in_c + ic) * 16;
                        for (int e = 0; e < 16; ++e) m[e] += u.get(ubase + e) * vt[e];
                    }
                    // A^T M
                    double am[2][4];
                    for (int b = 0; b < 4; ++b) {
                        am[0][b] = m[0 * 4 + b] + m[1 * 4 + b] + m[2 * 4 + b];
                        am[1][b] = m[1 * 4 + b] - m[2 * 4 + b] - m[3 * 4 + b];
                    }
                    double out[2][2];
                    out[0][0] = am[0][0] + am[0][1] + am[0][2];
                    out[0][1] = am[0][1] - am[0][2] - am[0][3];
                    out[1][0] = am[1][0] + am[1][1] + am[1][2];
                    out[1][1] = am[1][1] - am[1][2] - am[1][3];
                    for (int a = 0; a < 2; ++a) {
                        for (int b = 0; b < 2; ++b) {
                            const int64_t oh = th * 2 + a, ow = tw * 2 + b;
                            if (oh >= d.out_h || ow >= d.out_w) continue;
                            double val = out[a][b];
                            if (bias) val += bias->get(oc);
                            if (apply_relu) {
                                val = std::max(val, 0.0);
                                if (relu_cap > 0.0) val = std::min(val, relu_cap);
                            }
                            y.set(idx4(y.spec, n, oc, oh, ow), val);
                        }
                    }
                }
            }
        }
    }
}

void kernel_conv2d_input_grad(const Graph& g, const OpNode& node, const TensorValue& dy,
                              const TensorValue& w, TensorValue& dx) {
    Conv2dDims d = conv2d_dims(g, node);
    const int64_t oc_per_group = d.out_c / d.groups;
    const int64_t ic_per_group = d.in_c / d.groups;
    for (int64_t n = 0; n < d.batch; ++n) {
        for (int64_t ci = 0; ci < d.in_c; ++ci) {
            const int64_t grp = ci / ic_per_group;
            const int64_t ic = ci % ic_per_group;
            for (int64_t h = 0; h < d.in_h; ++h) {
                for (int64_t iw = 0; iw < d.in_w; ++iw) {
                    double acc = 0.0;
                    for (int64_t oc = 0; oc < oc_per_group; ++oc) {
                        const int64_t dyc = grp * oc_per_group + oc;
                        for (int64_t kh = 0; kh < d.kh; ++kh) {
                            const int64_t num_h = h + d.pad - kh;
                            if (num_h < 0 || num_h % d.stride) continue;
                            const int64_t oh = num_h / d.stride;
                            if (oh >= d.out_h) continue;
                            for (int64_t kw = 0; kw < d.kw; ++kw) {
                                const int64_t num_w = iw + d.pad - kw;
                                if (num_w < 0 || num_w % d.stride) continue;
                                const int64_t ow = num_w / d.stride;
                                if (ow >= d.out_w) continue;
                                acc += dy.get(idx4(dy.spec, n, dyc, oh, ow)) *
                                       w.get(widx(w.spec, dyc, ic, kh, kw));
                            }
                        }
                    }
                    dx.set(idx4(dx.spec, n, ci, h, iw), acc);
                }
            }
        }
    }
}

void kernel_conv2d_weight_grad(const Graph& g, const OpNode& node, const TensorValue& x,
                               const TensorValue& dy, TensorValue& dw) {
    Conv2dDims d = conv2d_dims(g, node);
    const int64_t ic_per_group = d.groups == 1 ? d.in_c : d.in_c / d.groups;
    const int64_t wi = d.groups == 1 ? ic_per_group : 1;
    for (int64_t oc = 0; oc < d.out_c; ++oc) {
        for (int64_t ic = 0; ic < wi; ++ic) {
            // groups == 1 pairs every input channel with every filter;
            // groups == C (depthwise) pairs channel oc with itself.
            const int64_t xc = d.groups == 1 ? ic : oc;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                    double acc = 0.0;
                    for (int64_t n = 0; n < d.batch; ++n) {
                        for (int64_t oh = 0; oh < d.out_h; ++oh) {
                            const int64_t h = oh * d.stride - d.pad + kh;
                            if (h < 0 || h >= d.in_h) continue;
                            for (int64_t ow = 0; ow < d.out_w; ++ow) {
                                const int64_t iw = ow * d.stride - d.pad + kw;
                                if (iw < 0 || iw >= d.in_w) continue;
                                acc += dy.get(idx4(dy.spec, n, oc, oh, ow)) *
                                       x.get(idx4(x.spec, n, xc, h, iw));
                            }
                        }
                    }
                    dw.set(widx(dw.spec, oc, ic, kh, kw), acc);
                }
            }
        }
    }
}

void kernel_avgpool2d(const Graph& g, const OpNode& node, const TensorValue& x,
                      TensorValue& y) {
    Conv2dDims d = conv2d_dims(g, node);
    const double inv = 1.0 / static_cast<double>(d.kh * d.kw);
    for (int64_t n = 0; n < d.batch; ++n) {
        for (int64_t c = 0; c < d.in_c; ++c) {
            for (int64_t oh = 0; oh < d.out_h; ++oh) {
                for (int64_t ow = 0; ow < d.out_w; ++ow) {
                    double acc = 0.0;
                    for (int64_t kh = 0; kh < d.kh; ++kh) {
                        const int64_t h = oh * d.stride + kh;
                        if (h >= d.in_h) continue;
                        for (int64_t kw = 0; kw < d.kw; ++kw) {
                            const int64_t iw = ow * d.stride + kw;
                            if (iw >= d.in_w) continue;
                            acc += x.get(idx4(x.spec, n, c, h, iw));
                        }
                    }
                    y.set(idx4(y.spec, n, c, oh, ow), acc * inv);
                }
            }
        }
    }
}

// add/mul with an optional rank-1 operand broadcast along the channel axis.
void kernel_binary(const OpNode& node, const TensorValue& a, const TensorValue& b,
                   TensorValue& y, bool is_mul) {
    if (a.spec.shape == b.spec.shape) {
        for (int64_t i = 0; i < y.numel(); ++i)
            y.set(i, is_mul ? a.get(i) * b.get(i) : a.get(i) + b.get(i));
        return;
    }
    const auto& shape = a.spec.shape;
    if (shape.size() == 2) {
        const int64_t m = shape[0], n = shape[1];
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                const double bv = b.get(j);
                const double av = a.get(i * n + j);
                y.set(i * n + j, is_mul ? av * bv : av + bv);
            }
        return;
    }
    if (shape.size() == 4) {
        const bool nhwc = is_nhwc(a.spec);
        const int64_t N = shape[0];
        const int64_t C = nhwc ? shape[3] : shape[1];
        const int64_t H = nhwc ? shape[1] : shape[2];
        const int64_t W = nhwc ? shape[2] : shape[3];
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const double bv = b.get(c);
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t w = 0; w < W; ++w) {
                        const int64_t i = idx4(a.spec, n, c, h, w);
                        y.set(i, is_mul ? a.get(i) * bv : a.get(i) + bv);
                    }
            }
        return;
    }
    exec_error(node.id, "unsupported broadcast");
}

void kernel_reduce_sum(const OpNode& node, const TensorValue& x, TensorValue& y) {
    auto axes = attr_ints(node.attrs, "axes", {});
    const bool keepdims = attr_int(node.attrs, "keepdims", 0) != 0;
    std::vector<bool> reduced(x.spec.shape.size(), false);
    for (int64_t a : axes) reduced[static_cast<size_t>(a)] = true;

    std::vector<double> acc(static_cast<size_t>(y.numel()), 0.0);
    const auto& shape = x.spec.shape;
    std::vector<int64_t> coord(shape.size(), 0);
    const auto out_strides = strides_of(y.spec.shape);
    for (int64_t flat = 0; flat < x.numel(); ++flat) {
        int64_t rem = flat;
        const auto in_strides = strides_of(shape);
        for (size_t a = 0; a < shape.size(); ++a) {
            coord[a] = rem / in_strides[a];
            rem %= in_strides[a];
        }
        int64_t out_index = 0;
        size_t out_axis = 0;
        for (size_t a = 0; a < shape.size(); ++a) {
            if (reduced[a]) {
                if (keepdims) ++out_axis;
                continue;
            }
            out_index += coord[a] * out_strides[out_axis];
            ++out_axis;
        }
        acc[static_cast<size_t>(out_index)] += x.get(flat);
    }
    for (int64_t i = 0; i < y.numel(); ++i) y.set(i, acc[static_cast<size_t>(i)]);
}

void kernel_transpose(const OpNode& node, const TensorValue& x, TensorValue& y) {
    std::vector<int64_t> perm = attr_ints(node.attrs, "perm", {});
    if (perm.empty()) {
        perm.resize(x.spec.shape.size());
        for (size_t i = 0; i < perm.size(); ++i)
            perm[i] = static_cast<int64_t>(perm.size() - 1 - i);
    }
    const auto in_strides = strides_of(x.spec.shape);
    const auto out_strides = strides_of(y.spec.shape);
    std::vector<int64_t> coord(perm.size(), 0);
    for (int64_t flat = 0; flat < y.numel(); ++flat) {
        int64_t rem = flat;
        for (size_t a = 0; a < perm.size(); ++a) {
            coord[a] = rem / out_strides[a];
            rem %= out_strides[a];
        }
        int64_t src = 0;
        for (size_t a = 0; a < perm.size(); ++a)
            src += coord[a] * in_strides[static_cast<size_t>(perm[a])];
        y.set(flat, x.get(src));
    }
}

void kernel_slice(const OpNode& node, const TensorValue& x, TensorValue& y) {
    auto begin = attr_ints(node.attrs, "begin", {});
    const auto in_strides = strides_of(x.spec.shape);
    const auto out_strides = strides_of(y.spec.shape);
    std::vector<int64_t> coord(begin.size(), 0);
    for (int64_t flat = 0; flat < y.numel(); ++flat) {
        int64_t rem = flat;
        for (size_t a = 0; a < coord.size(); ++a) {
            coord[a] = rem / out_strides[a];
            rem %= out_strides[a];
        }
        int64_t src = 0;
        for (size_t a = 0; a < coord.size(); ++a)
            src += (coord[a] + begin[a]) * in_strides[a];
        y.set(flat, x.get(src));
    }
}

void kernel_concat(const OpNode& node, const std::vector<const TensorValue*>& ins,
                   TensorValue& y) {
    const size_t axis = static_cast<size_t>(attr_int(node.attrs, "axis", 0));
    const auto out_strides = strides_of(y.spec.shape);
    int64_t axis_offset = 0;
    for (const TensorValue* x : ins) {
        const auto in_strides = strides_of(x->spec.shape);
        std::vector<int64_t> coord(x->spec.shape.size(), 0);
        for (int64_t flat = 0; flat < x->numel(); ++flat) {
            int64_t rem = flat;
            for (size_t a = 0; a < coord.size(); ++a) {
                coord[a] = rem / in_strides[a];
                rem %= in_strides[a];
            }
            int64_t dst = 0;
            for (size_t a = 0; a < coord.size(); ++a) {
                const int64_t c = a == axis ? coord[a] + axis_offset : coord[a];
                dst += c * out_strides[a];
            }
            y.set(dst, x->get(flat));
        }
        axis_offset += x->spec.shape[axis];
    }
}

void kernel_softmax_ce_loss(const TensorValue& logits, const TensorValue& targets,
                            TensorValue& loss, const std::string& node_id) {
    const int64_t m = logits.spec.shape[0], n = logits.spec.shape[1];
    double total = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        double mx = logits.get(i * n);
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, logits.get(i * n + j));
        double sum = 0.0;
        for (int64_t j = 0; j < n; ++j) sum += std::exp(logits.get(i * n + j) - mx);
        const int64_t t = static_cast<int64_t>(std::llround(targets.get(i)));
        if (t < 0 || t >= n) exec_error(node_id, "target class out of range");
        total += std::log(sum) - (logits.get(i * n + t) - mx);
    }
    loss.set(0, total / static_cast<double>(m));
}

void kernel_softmax_ce_grad(const TensorValue& logits, const TensorValue& targets,
                            TensorValue& grad, const std::string& node_id) {
    const int64_t m = logits.spec.shape[0], n = logits.spec.shape[1];
    for (int64_t i = 0; i < m; ++i) {
        double mx = logits.get(i * n);
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, logits.get(i * n + j));
        double sum = 0.0;
        for (int64_t j = 0; j < n; ++j) sum += std::exp(logits.get(i * n + j) - mx);
        const int64_t t = static_cast<int64_t>(std::llround(targets.get(i)));
        if (t < 0 || t >= n) exec_error(node_id, "target class out of range");
        for (int64_t j = 0; j < n; ++j) {
            const double p = std::exp(logits.get(i * n + j) - mx) / sum;
            grad.set(i * n + j, (p - (j == t ? 1.0 : 0.0)) / static_cast<double>(m));
        }
    }
}

// Partial updates touch the leading update_count coordinates along
// update_axis; the gradient already has the sliced shape.
void for_each_updated(const TensorValue& grad, const TensorValue& param,
                      int64_t update_axis, const std::function<void(int64_t, int64_t)>& fn) {
    const auto gs = strides_of(grad.spec.shape);
    const auto ps = strides_of(param.spec.shape);
    std::vector<int64_t> coord(grad.spec.shape.size(), 0);
    for (int64_t flat = 0; flat < grad.numel(); ++flat) {
        int64_t rem = flat;
        int64_t pidx = 0;
        for (size_t a = 0; a < coord.size(); ++a) {
            coord[a] = rem / gs[a];
            rem %= gs[a];
            pidx += coord[a] * ps[a];
        }
        (void)update_axis;
        fn(flat, pidx);
    }
}

} // namespace

void Executor::execute_node(const OpNode& node, bool training) {
    std::vector<const TensorValue*> ins;
    ins.reserve(node.inputs.size());
    for (const auto& id : node.inputs) ins.push_back(&storage(id));

    if (node.kind == OpKind::apply_sgd || node.kind == OpKind::apply_momentum) {
        if (!training) return;
        const double lr = attr_double(node.attrs, "lr", 0.0);
        TensorValue& param = storage(node.inputs[0]);
        const TensorValue& grad = *ins[1];
        const int64_t axis = attr_int(node.attrs, "update_axis", 0);
        if (node.kind == OpKind::apply_sgd) {
            for_each_updated(grad, param, axis, [&](int64_t gi, int64_t pi) {
                param.set(pi, param.get(pi) - lr * grad.get(gi));
            });
        } else {
            const double mu = attr_double(node.attrs, "momentum", 0.0);
            TensorValue& vel = storage(node.inputs[2]);
            for_each_updated(grad, param, axis, [&](int64_t gi, int64_t pi) {
                const double v = mu * vel.get(gi) + grad.get(gi);
                vel.set(gi, v);
                param.set(pi, param.get(pi) - lr * v);
            });
        }
        return;
    }

    const std::string& out_id = node.outputs[0];
    TensorValue& out = storage(out_id);

    OpKind kind = node.kind;
    if (kind == OpKind::fused) {
        // Linear-headed fusions run the head into a temporary of the output
        // spec, then the remaining elementwise steps in place; this matches
        // the unfused rounding exactly.
        OpKind head = node.fused_kinds.at(0);
        if (head == OpKind::conv2d || head == OpKind::dwconv2d || head == OpKind::matmul) {
            bool has_add = false;
            bool has_relu = false;
            double cap = 0.0;
            for (size_t i = 1; i < node.fused_kinds.size(); ++i) {
                if (node.fused_kinds[i] == OpKind::add) has_add = true;
                if (node.fused_kinds[i] == OpKind::relu) has_relu = true;
                if (node.fused_kinds[i] == OpKind::relu6) {
                    has_relu = true;
                    cap = 6.0;
                }
            }
            const TensorValue* bias = nullptr;
            if (node.inputs.size() >= 3) bias = ins[2];
            const TensorValue* head_bias = has_add ? nullptr : bias;
            if (node.impl == ImplBinding::winograd_f2x2_3x3) {
                kernel_conv2d_winograd(graph_, node, *ins[0], *ins[1], bias, out, cap,
                                       has_relu);
            } else {
                if (head == OpKind::matmul)
                    kernel_matmul(node, *ins[0], *ins[1], head_bias, out);
                else
                    kernel_conv2d(graph_, node, *ins[0], *ins[1], head_bias, out);
                if (has_add && bias) {
                    TensorValue tmp = out;
                    kernel_binary(node, tmp, *bias, out, false);
                }
                if (has_relu) {
                    for (int64_t i = 0; i < out.numel(); ++i) {
                        double v = std::max(out.get(i), 0.0);
                        if (cap > 0.0) v = std::min(v, cap);
                        out.set(i, v);
                    }
                }
            }
        } else {
            // Elementwise chain: step 0 consumes the leading inputs, each
            // later binary step consumes the next input in order.
            size_t next_in = 0;
            TensorValue cur = TensorValue::zeros(out.spec);
            for (size_t s = 0; s < node.fused_kinds.size(); ++s) {
                const OpKind k = node.fused_kinds[s];
                if (k == OpKind::add || k == OpKind::mul) {
                    const TensorValue& a = s == 0 ? *ins[next_in++] : cur;
                    const TensorValue& b = *ins[next_in++];
                    TensorValue dst = TensorValue::zeros(out.spec);
                    kernel_binary(node, a, b, dst, k == OpKind::mul);
                    cur = std::move(dst);
                } else {
                    if (s == 0) {
                        const TensorValue& a = *ins[next_in++];
                        cur = TensorValue::zeros(out.spec);
                        for (int64_t i = 0; i < cur.numel(); ++i) cur.set(i, a.get(i));
                    }
                    if (k == OpKind::scale) {
                        const double f = attr_double(node.attrs,
                                                     "factor" + std::to_string(s), 1.0);
                        for (int64_t i = 0; i < cur.numel(); ++i)
                            cur.set(i, cur.get(i) * f);
                    } else if (k == OpKind::relu || k == OpKind::relu6) {
                        for (int64_t i = 0; i < cur.numel(); ++i) {
                            double v = std::max(cur.get(i), 0.0);
                            if (k == OpKind::relu6) v = std::min(v, 6.0);
                            cur.set(i, v);
                        }
                    }
                }
            }
            out = std::move(cur);
        }
    } else {
        switch (kind) {
            case OpKind::matmul:
                kernel_matmul(node, *ins[0], *ins[1],
                              node.inputs.size() == 3 ? ins[2] : nullptr, out);
                break;
            case OpKind::conv2d:
            case OpKind::dwconv2d:
                if (node.impl == ImplBinding::winograd_f2x2_3x3)
                    kernel_conv2d_winograd(graph_, node, *ins[0], *ins[1],
                                           node.inputs.size() == 3 ? ins[2] : nullptr,
                                           out, 0.0, false);
                else
                    kernel_conv2d(graph_, node, *ins[0], *ins[1],
                                  node.inputs.size() == 3 ? ins[2] : nullptr, out);
                break;
            case OpKind::conv2d_input_grad:
                kernel_conv2d_input_grad(graph_, node, *ins[0], *ins[1], out);
                break;
            case OpKind::conv2d_weight_grad:
                kernel_conv2d_weight_grad(graph_, node, *ins[0], *ins[1], out);
                break;
            case OpKind::add:
            case OpKind::mul:
                kernel_binary(node, *ins[0], *ins[1], out, kind == OpKind::mul);
                break;
            case OpKind::scale: {
                const double f = attr_double(node.attrs, "factor", 1.0);
                for (int64_t i = 0; i < out.numel(); ++i) out.set(i, ins[0]->get(i) * f);
                break;
            }
            case OpKind::relu:
            case OpKind::relu6:
                for (int64_t i = 0; i < out.numel(); ++i) {
                    double v = std::max(ins[0]->get(i), 0.0);
                    if (kind == OpKind::relu6) v = std::min(v, 6.0);
                    out.set(i, v);
                }
                break;
            case OpKind::relu_grad_mask: {
                // Masks against the activation output: zero where the
                // activation clipped (<= 0, or >= cap for capped relu).
                const double cap = attr_double(node.attrs, "cap", 0.0);
                for (int64_t i = 0; i < out.numel(); ++i) {
                    const double ref = ins[1]->get(i);
                    const bool pass = ref > 0.0 && (cap <= 0.0 || ref < cap);
                    out.set(i, pass ? ins[0]->get(i) : 0.0);
                }
                break;
            }
            case OpKind::reduce_sum:
                kernel_reduce_sum(node, *ins[0], out);
                break;
            case OpKind::avgpool2d:
                kernel_avgpool2d(graph_, node, *ins[0], out);
                break;
            case OpKind::reshape:
                for (int64_t i = 0; i < out.numel(); ++i) out.set(i, ins[0]->get(i));
                break;
            case OpKind::transpose:
                kernel_transpose(node, *ins[0], out);
                break;
            case OpKind::slice:
                kernel_slice(node, *ins[0], out);
                break;
            case OpKind::concat:
                kernel_concat(node, ins, out);
                break;
            case OpKind::softmax_ce_loss:
                kernel_softmax_ce_loss(*ins[0], *ins[1], out, node.id);
                break;
            case OpKind::softmax_ce_grad:
                kernel_softmax_ce_grad(*ins[0], *ins[1], out, node.id);
                break;
            case OpKind::mse_loss: {
                double acc = 0.0;
                for (int64_t i = 0; i < ins[0]->numel(); ++i) {
                    const double d = ins[0]->get(i) - ins[1]->get(i);
                    acc += d * d;
                }
                out.set(0, acc / static_cast<double>(ins[0]->numel()));
                break;
            }
            case OpKind::mse_grad: {
                const double inv = 2.0 / static_cast<double>(ins[0]->numel());
                for (int64_t i = 0; i < out.numel(); ++i)
                    out.set(i, (ins[0]->get(i) - ins[1]->get(i)) * inv);
                break;
            }
            default:
                exec_error(node.id, "no kernel for kind '" +
                                        std::string(to_string(node.kind)) + "'");
        }
    }

    if (!opt_.fault_tensor.empty() && out_id == opt_.fault_tensor) {
        for (int64_t i = 0; i < out.numel(); ++i) out.set(i, out.get(i) * opt_.fault_factor);
    }
    if (opt_.check_finite) {
        for (int64_t i = 0; i < out.numel(); ++i) {
            if (!std::isfinite(out.get(i)))
                exec_error(node.id, "produced a non-finite value in '" + out_id + "'");
        }
    }
    if (capture_set_.count(out_id)) captured_[out_id] = out;
}

void Executor::run_steps(bool training, const std::map<std::string, TensorValue>& inputs) {
    if (!state_) throw Error(ErrorKind::semantic, "executor has no bound state");
    for (const auto& id : graph_.inputs) {
        auto it = inputs.find(id);
        if (it == inputs.end())
            throw Error(ErrorKind::shape, "missing value for graph input '" + id + "'");
        const TensorSpec& spec = graph_.tensor(id);
        if (it->second.spec.shape != spec.shape)
            throw Error(ErrorKind::shape, "input '" + id + "' has the wrong shape");
        TensorValue v = it->second;
        v.spec = spec;
        transients_[id] = std::move(v);
        if (capture_set_.count(id)) captured_[id] = transients_[id];
    }
    for (const auto& step : plan_.steps) {
        const OpNode* node = graph_.find_node(step);
        if (!node) throw Error(ErrorKind::semantic, "plan names unknown node '" + step + "'");
        if (!training) {
            if (node->kind == OpKind::apply_sgd || node->kind == OpKind::apply_momentum)
                continue;
            bool produces_grad = false;
            for (const auto& out : node->outputs) {
                if (graph_.tensor(out).role == TensorRole::gradient) produces_grad = true;
            }
            if (produces_grad) continue;
        }
        execute_node(*node, training);
    }
}

std::map<std::string, TensorValue> Executor::run_forward(
    const std::map<std::string, TensorValue>& inputs, double* loss_out) {
    run_steps(false, inputs);
    std::map<std::string, TensorValue> outputs;
    for (const auto& id : graph_.outputs) {
        if (graph_.tensor(id).role == TensorRole::gradient) continue;
        auto it = transients_.find(id);
        if (it != transients_.end()) outputs[id] = it->second;
    }
    if (loss_out) {
        *loss_out = 0.0;
        if (!graph_.objective.empty()) {
            auto it = transients_.find(graph_.objective);
            if (it != transients_.end()) *loss_out = it->second.get(0);
        }
    }
    return outputs;
}

double Executor::run_train_step(const std::map<std::string, TensorValue>& batch) {
    run_steps(true, batch);
    double loss = 0.0;
    if (!graph_.objective.empty()) {
        auto it = transients_.find(graph_.objective);
        if (it == transients_.end())
            throw Error(ErrorKind::semantic, "objective was not computed");
        loss = it->second.get(0);
    }
    if (!std::isfinite(loss)) throw Error(ErrorKind::numeric, "non-finite loss");
    ++state_->step_count;
    return loss;
}

const TensorValue& Executor::captured(const std::string& tensor_id) const {
    auto it = captured_.find(tensor_id);
    if (it == captured_.end())
        throw Error(ErrorKind::semantic, "tensor '" + tensor_id + "' was not captured");
    return it->second;
}

} // namespace minitrain
