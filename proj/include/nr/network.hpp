#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "nr/layers.hpp"
#include "nr/parallel.hpp"
#include "nr/tensor.hpp"

namespace nr {

// Boolean unit mask for one layer: active[u] == false zeroes unit u's
// post-bias pre-activation (whole channel map for conv, scalar for dense).
struct NeuronMask {
    int layer_index = -1;
    std::vector<std::uint8_t> active;

    static NeuronMask all_on(int layer_index, int units) {
        return NeuronMask{layer_index, std::vector<std::uint8_t>(static_cast<std::size_t>(units), 1)};
    }
    static NeuronMask from_coalition_bits(int layer_index, const std::vector<std::uint8_t>& bits) {
        return NeuronMask{layer_index, bits};
    }
};

// Per-layer switch: multiplies the pre-activation element-wise (per-channel
// broadcast for conv layers).
template <typename T>
struct LayerSwitch {
    int layer_index = -1;
    std::vector<T> values;
};

template <typename T>
struct Network {
    std::vector<Layer<T>> layers;
    std::vector<int> maskable_layers;  // layer indices whose output units are rankable
    std::vector<int> input_shape;      // per-sample, e.g. {1,28,28} or {10}
    int num_classes = 0;

    const Layer<T>& layer(int i) const { return layers[static_cast<std::size_t>(i)]; }
    Layer<T>& layer(int i) { return layers[static_cast<std::size_t>(i)]; }
    int num_layers() const { return static_cast<int>(layers.size()); }

    int units_at(int layer_index) const { return layer(layer_index).output_units(); }

    template <typename U>
    Network<U> cast() const {
        Network<U> o;
        o.layers.reserve(layers.size());
        for (const auto& l : layers) o.layers.push_back(l.template cast<U>());
        o.maskable_layers = maskable_layers;
        o.input_shape = input_shape;
        o.num_classes = num_classes;
        return o;
    }
};

using NetworkF = Network<float>;

// ---------------------------------------------------------------------------
// Shape tracing

inline std::vector<int> layer_output_shape(const std::vector<int>& in, LayerKind kind, int out_ch, int ksize,
                                           int stride, int pool, int out_features) {
    switch (kind) {
        case LayerKind::conv2d: {
            if (in.size() != 3) throw ShapeError("conv2d expects [C,H,W] input, got " + shape_str(in));
            const int oh = (in[1] - ksize) / stride + 1;
            const int ow = (in[2] - ksize) / stride + 1;
            if (oh <= 0 || ow <= 0) throw ShapeError("conv2d output collapsed for input " + shape_str(in));
            return {out_ch, oh, ow};
        }
        case LayerKind::maxpool2d: {
            if (in.size() != 3) throw ShapeError("maxpool2d expects [C,H,W] input");
            return {in[0], in[1] / pool, in[2] / pool};
        }
        case LayerKind::relu:
            return in;
        case LayerKind::flatten: {
            int n = 1;
            for (int d : in) n *= d;
            return {n};
        }
        case LayerKind::dense: {
            if (in.size() != 1) throw ShapeError("dense expects flat input, got " + shape_str(in));
            return {out_features};
        }
    }
    throw ShapeError("unknown layer kind");
}

template <typename T>
std::vector<int> layer_output_shape(const std::vector<int>& in, const Layer<T>& l) {
    if (l.kind == LayerKind::conv2d && in.size() == 3 && in[0] != l.in_ch)
        throw ShapeError("conv2d channel mismatch: input " + shape_str(in) + " vs in_ch " + std::to_string(l.in_ch));
    if (l.kind == LayerKind::dense && in.size() == 1 && in[0] != l.in_features)
        throw ShapeError("dense feature mismatch: input " + shape_str(in) + " vs in_features " +
                         std::to_string(l.in_features));
    return layer_output_shape(in, l.kind, l.out_ch, l.ksize, l.stride, l.pool, l.out_features);
}

// Per-layer output shapes (sample-level). shapes[i] is the output of layers[i].
template <typename T>
std::vector<std::vector<int>> trace_shapes(const Network<T>& net) {
    std::vector<std::vector<int>> shapes;
    std::vector<int> cur = net.input_shape;
    shapes.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        cur = layer_output_shape(cur, l);
        shapes.push_back(cur);
    }
    return shapes;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

// cols buffer layout: [in_ch*k*k, oh*ow] for one sample, row-major.
template <typename T>
void im2col(const T* x, int in_ch, int h, int w, int k, int stride, T* cols) {
    const int oh = (h - k) / stride + 1;
    const int ow = (w - k) / stride + 1;
    const int opix = oh * ow;
    for (int c = 0; c < in_ch; ++c) {
        const T* xc = x + static_cast<std::int64_t>(c) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = cols + (static_cast<std::int64_t>(c) * k * k + ki * k + kj) * opix;
                for (int i = 0; i < oh; ++i) {
                    const T* src = xc + (i * stride + ki) * w + kj;
                    for (int j = 0; j < ow; ++j) row[i * ow + j] = src[j * stride];
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, int in_ch, int h, int w, int k, int stride, T* dx) {
    const int oh = (h - k) / stride + 1;
    const int ow = (w - k) / stride + 1;
    const int opix = oh * ow;
    for (int c = 0; c < in_ch; ++c) {
        T* xc = dx + static_cast<std::int64_t>(c) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = cols + (static_cast<std::int64_t>(c) * k * k + ki * k + kj) * opix;
                for (int i = 0; i < oh; ++i) {
                    T* dst = xc + (i * stride + ki) * w + kj;
                    for (int j = 0; j < ow; ++j) dst[j * stride] += row[i * ow + j];
                }
            }
        }
    }
}

}  // namespace detail

// Records everything backward needs. acts[i] is the input of layers[i];
// acts[L] is the network output. raw_out[i] is layer i's output before unit
// multipliers were applied (stored only where a mask/switch is attached).
template <typename T>
struct Tape {
    std::vector<Tensor<T>> acts;
    std::map<int, Tensor<T>> raw_out;
    std::vector<std::vector<std::int32_t>> pool_src;  // per layer; empty unless maxpool
};

template <typename T>
struct UnitScale {
    // multiplier per unit; empty means identity
    std::vector<T> mult;
    std::vector<std::uint8_t> mask_bits;  // empty when no mask (all active)
    bool has_switch = false;
};

// Resolves masks+switches into per-layer unit multipliers, validating lengths.
template <typename T>
std::map<int, UnitScale<T>> resolve_unit_scales(const Network<T>& net, const std::vector<NeuronMask>& masks,
                                                const std::vector<LayerSwitch<T>>& switches) {
    std::map<int, UnitScale<T>> scales;
    auto units_or_throw = [&](int li, const char* what) {
        if (li < 0 || li >= net.num_layers()) throw ShapeError(std::string(what) + ": bad layer index " + std::to_string(li));
        const int u = net.units_at(li);
        if (u == 0) throw ShapeError(std::string(what) + ": layer " + std::to_string(li) + " has no maskable units");
        return u;
    };
    for (const auto& m : masks) {
        const int u = units_or_throw(m.layer_index, "mask");
        if (static_cast<int>(m.active.size()) != u)
            throw ShapeError("mask length " + std::to_string(m.active.size()) + " != units " + std::to_string(u) +
                             " at layer " + std::to_string(m.layer_index));
        auto& sc = scales[m.layer_index];
        if (sc.mult.empty()) sc.mult.assign(static_cast<std::size_t>(u), T(1));
        if (sc.mask_bits.empty()) sc.mask_bits.assign(static_cast<std::size_t>(u), 1);
        for (int j = 0; j < u; ++j) {
            sc.mask_bits[static_cast<std::size_t>(j)] &= m.active[static_cast<std::size_t>(j)] ? 1 : 0;
            if (!m.active[static_cast<std::size_t>(j)]) sc.mult[static_cast<std::size_t>(j)] = T(0);
        }
    }
    for (const auto& s : switches) {
        const int u = units_or_throw(s.layer_index, "switch");
        if (static_cast<int>(s.values.size()) != u)
            throw ShapeError("switch length " + std::to_string(s.values.size()) + " != units " + std::to_string(u) +
                             " at layer " + std::to_string(s.layer_index));
        auto& sc = scales[s.layer_index];
        if (sc.mult.empty()) sc.mult.assign(static_cast<std::size_t>(u), T(1));
        sc.has_switch = true;
        for (int j = 0; j < u; ++j) sc.mult[static_cast<std::size_t>(j)] *= s.values[static_cast<std::size_t>(j)];
    }
    return scales;
}

template <typename T>
void apply_unit_scale(Tensor<T>& out, const Layer<T>& l, const std::vector<T>& mult, int batch) {
    const int units = l.output_units();
    const std::int64_t per_unit = out.numel() / (static_cast<std::int64_t>(batch) * units);
    T* p = out.ptr();
    for (int b = 0; b < batch; ++b)
        for (int u = 0; u < units; ++u) {
            const T m = mult[static_cast<std::size_t>(u)];
            T* q = p + (static_cast<std::int64_t>(b) * units + u) * per_unit;
            for (std::int64_t i = 0; i < per_unit; ++i) q[i] *= m;
        }
}

// Forward pass over a batch. `batch` is [B, ...input_shape]. Returns logits
// [B, num_classes]. Masked units contribute exactly zero downstream.
template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& batch, const std::vector<NeuronMask>& masks = {},
                  const std::vector<LayerSwitch<T>>& switches = {}, Tape<T>* tape = nullptr) {
    if (batch.ndim() < 2) throw ShapeError("batch must have a leading batch dimension");
    {
        std::vector<int> per_sample(batch.shape.begin() + 1, batch.shape.end());
        if (per_sample != net.input_shape)
            throw ShapeError("batch sample shape " + shape_str(per_sample) + " != network input " +
                             shape_str(net.input_shape));
    }
    const int B = batch.dim(0);
    auto scales = resolve_unit_scales(net, masks, switches);

    if (tape) {
        tape->acts.clear();
        tape->raw_out.clear();
        tape->pool_src.assign(net.layers.size(), {});
    }

    Tensor<T> cur = batch;
    std::vector<int> cur_shape(batch.shape.begin() + 1, batch.shape.end());

    for (int li = 0; li < net.num_layers(); ++li) {
        const Layer<T>& l = net.layer(li);
        if (tape) tape->acts.push_back(cur);
        std::vector<int> out_shape = layer_output_shape(cur_shape, l);

        Tensor<T> out;
        switch (l.kind) {
            case LayerKind::conv2d: {
                const int h = cur_shape[1], w = cur_shape[2];
                const int oh = out_shape[1], ow = out_shape[2];
                const int opix = oh * ow;
                const int ckk = l.in_ch * l.ksize * l.ksize;
                out = Tensor<T>({B, l.out_ch, oh, ow});
                const std::int64_t in_stride = cur.numel() / B;
                const std::int64_t out_stride = static_cast<std::int64_t>(l.out_ch) * opix;
                const T* xp = cur.ptr();
                T* yp = out.ptr();
                const Layer<T>* lp = &l;
                parallel_for(B, [&, lp](std::int64_t b0, std::int64_t b1) {
                    std::vector<T> cols(static_cast<std::size_t>(ckk) * opix);
                    ConstMatMap<T> W(lp->weight.ptr(), lp->out_ch, ckk);
                    for (std::int64_t b = b0; b < b1; ++b) {
                        detail::im2col(xp + b * in_stride, lp->in_ch, h, w, lp->ksize, lp->stride, cols.data());
                        ConstMatMap<T> C(cols.data(), ckk, opix);
                        MatMap<T> Y(yp + b * out_stride, lp->out_ch, opix);
                        Y.noalias() = W * C;
                        for (int oc = 0; oc < lp->out_ch; ++oc) Y.row(oc).array() += lp->bias[oc];
                    }
                });
                break;
            }
            case LayerKind::maxpool2d: {
                const int c = cur_shape[0], h = cur_shape[1], w = cur_shape[2];
                const int oh = out_shape[1], ow = out_shape[2];
                out = Tensor<T>({B, c, oh, ow});
                std::vector<std::int32_t> src;
                const bool want_src = tape != nullptr;
                if (want_src) src.resize(static_cast<std::size_t>(out.numel()));
                const T* xp = cur.ptr();
                T* yp = out.ptr();
                const std::int64_t in_stride = static_cast<std::int64_t>(c) * h * w;
                const std::int64_t out_stride = static_cast<std::int64_t>(c) * oh * ow;
                const int p = l.pool;
                parallel_for(B, [&](std::int64_t b0, std::int64_t b1) {
                    for (std::int64_t b = b0; b < b1; ++b) {
                        const T* x = xp + b * in_stride;
                        T* y = yp + b * out_stride;
                        std::int32_t* s = want_src ? src.data() + b * out_stride : nullptr;
                        for (int cc = 0; cc < c; ++cc)
                            for (int i = 0; i < oh; ++i)
                                for (int j = 0; j < ow; ++j) {
                                    int best = (cc * h + i * p) * w + j * p;
                                    T bv = x[best];
                                    for (int di = 0; di < p; ++di)
                                        for (int dj = 0; dj < p; ++dj) {
                                            const int idx = (cc * h + i * p + di) * w + j * p + dj;
                                            if (x[idx] > bv) {
                                                bv = x[idx];
                                                best = idx;
                                            }
                                        }
                                    const int oidx = (cc * oh + i) * ow + j;
                                    y[oidx] = bv;
                                    if (s) s[oidx] = best;
                                }
                    }
                });
                if (tape) tape->pool_src[static_cast<std::size_t>(li)] = std::move(src);
                break;
            }
            case LayerKind::relu: {
                out = cur;
                T* p = out.ptr();
                const std::int64_t n = out.numel();
                parallel_for(n, [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t i = i0; i < i1; ++i)
                        if (p[i] < T(0)) p[i] = T(0);
                });
                break;
            }
            case LayerKind::flatten: {
                out = cur;
                out.shape = {B, out_shape[0]};
                break;
            }
            case LayerKind::dense: {
                out = Tensor<T>({B, l.out_features});
                ConstMatMap<T> X(cur.ptr(), B, l.in_features);
                ConstMatMap<T> W(l.weight.ptr(), l.out_features, l.in_features);
                MatMap<T> Y(out.ptr(), B, l.out_features);
                Y.noalias() = X * W.transpose();
                for (int j = 0; j < l.out_features; ++j) Y.col(j).array() += l.bias[j];
                break;
            }
        }

        auto it = scales.find(li);
        if (it != scales.end()) {
            if (tape) tape->raw_out[li] = out;
            apply_unit_scale(out, l, it->second.mult, B);
        }
        cur = std::move(out);
        cur_shape = out_shape;
    }

    if (tape) tape->acts.push_back(cur);
    ensure_finite(cur, "forward output");
    return cur;
}

// Softmax cross-entropy (mean over batch). probs_out, when given, receives
// the softmax rows.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, Tensor<T>* probs_out = nullptr,
                             Tensor<T>* dlogits_out = nullptr) {
    const int B = logits.dim(0);
    const int C = logits.dim(1);
    if (static_cast<int>(labels.size()) != B) throw ShapeError("labels/batch size mismatch");
    Tensor<T> probs({B, C});
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const T* row = logits.ptr() + static_cast<std::int64_t>(b) * C;
        T* prow = probs.ptr() + static_cast<std::int64_t>(b) * C;
        T mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        const double log_denom = std::log(denom);
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= C) throw ShapeError("label out of range");
        for (int c = 0; c < C; ++c) prow[c] = static_cast<T>(std::exp(static_cast<double>(row[c] - mx)) / denom);
        loss -= static_cast<double>(row[y] - mx) - log_denom;
    }
    loss /= B;
    if (!std::isfinite(loss)) throw NumericError("non-finite loss");
    if (dlogits_out) {
        Tensor<T> dl({B, C});
        for (int b = 0; b < B; ++b) {
            const T* prow = probs.ptr() + static_cast<std::int64_t>(b) * C;
            T* drow = dl.ptr() + static_cast<std::int64_t>(b) * C;
            const int y = labels[static_cast<std::size_t>(b)];
            for (int c = 0; c < C; ++c) drow[c] = prow[c] / static_cast<T>(B);
            drow[y] -= T(1) / static_cast<T>(B);
        }
        *dlogits_out = std::move(dl);
    }
    if (probs_out) *probs_out = std::move(probs);
    return loss;
}

template <typename T>
struct Gradients {
    std::vector<Tensor<T>> dweight, dbias;      // aligned with net.layers
    std::map<int, std::vector<T>> dswitch;      // per switched layer
    Tensor<T> logits;                           // from the recorded forward
    double loss = 0.0;
};

// Reverse-mode pass: mean cross-entropy loss over the batch, gradients for
// all parameters and (when switches are attached) for the switch vectors.
// lowest_needed stops the walk below that layer index (the frozen prefix
// during switch training); want_params=false skips parameter gradients
// entirely and only propagates far enough to reach switch gradients.
template <typename T>
Gradients<T> backward(const Network<T>& net, const Tensor<T>& batch, const std::vector<int>& labels,
                      const std::vector<NeuronMask>& masks = {}, const std::vector<LayerSwitch<T>>& switches = {},
                      int lowest_needed = 0, bool want_params = true) {
    const int B = batch.dim(0);
    Tape<T> tape;
    Tensor<T> logits = forward(net, batch, masks, switches, &tape);
    auto scales = resolve_unit_scales(net, masks, switches);

    Gradients<T> g;
    g.dweight.resize(net.layers.size());
    g.dbias.resize(net.layers.size());

    Tensor<T> dlogits;
    g.loss = softmax_cross_entropy(logits, labels, static_cast<Tensor<T>*>(nullptr), &dlogits);

    Tensor<T> dout = std::move(dlogits);
    std::vector<std::vector<int>> shapes = trace_shapes(net);

    for (int li = net.num_layers() - 1; li >= 0; --li) {
        const Layer<T>& l = net.layer(li);
        const Tensor<T>& x = tape.acts[static_cast<std::size_t>(li)];

        auto it = scales.find(li);
        if (it != scales.end()) {
            const auto& sc = it->second;
            const Tensor<T>& raw = tape.raw_out.at(li);
            const int units = l.output_units();
            const std::int64_t per_unit = raw.numel() / (static_cast<std::int64_t>(B) * units);
            if (sc.has_switch) {
                std::vector<T> ds(static_cast<std::size_t>(units), T(0));
                const T* rp = raw.ptr();
                const T* dp = dout.ptr();
                for (int b = 0; b < B; ++b)
                    for (int u = 0; u < units; ++u) {
                        const std::int64_t off = (static_cast<std::int64_t>(b) * units + u) * per_unit;
                        T acc = T(0);
                        for (std::int64_t i = 0; i < per_unit; ++i) acc += rp[off + i] * dp[off + i];
                        // out = mask ∘ s ∘ raw, so d(out)/d(s_u) = mask_u · raw
                        const T mbit = sc.mask_bits.empty() ? T(1) : T(sc.mask_bits[static_cast<std::size_t>(u)]);
                        ds[static_cast<std::size_t>(u)] += acc * mbit;
                    }
                auto& slot = g.dswitch[li];
                if (slot.empty()) slot = std::move(ds);
            }
            // dL/draw = mult ∘ dL/dout
            T* dp = dout.ptr();
            for (int b = 0; b < B; ++b)
                for (int u = 0; u < units; ++u) {
                    const T m = sc.mult[static_cast<std::size_t>(u)];
                    T* q = dp + (static_cast<std::int64_t>(b) * units + u) * per_unit;
                    for (std::int64_t i = 0; i < per_unit; ++i) q[i] *= m;
                }
        }

        const bool need_params = want_params && l.has_params() && li >= lowest_needed;
        const bool need_dinput = li > lowest_needed;
        if (!need_params && !need_dinput) break;

        Tensor<T> din;
        switch (l.kind) {
            case LayerKind::conv2d: {
                const std::vector<int>& ins = li == 0 ? net.input_shape : shapes[static_cast<std::size_t>(li - 1)];
                const int h = ins[1], w = ins[2];
                const int oh = shapes[static_cast<std::size_t>(li)][1], ow = shapes[static_cast<std::size_t>(li)][2];
                const int opix = oh * ow;
                const int ckk = l.in_ch * l.ksize * l.ksize;
                const std::int64_t in_stride = static_cast<std::int64_t>(l.in_ch) * h * w;
                const std::int64_t out_stride = static_cast<std::int64_t>(l.out_ch) * opix;
                if (need_dinput) din = Tensor<T>(x.shape);
                ConstMatMap<T> W(l.weight.ptr(), l.out_ch, ckk);
                std::vector<T> cols(static_cast<std::size_t>(ckk) * opix);
                std::vector<T> dcols(static_cast<std::size_t>(ckk) * opix);
                if (need_params) {
                    g.dweight[static_cast<std::size_t>(li)] = Tensor<T>({l.out_ch, l.in_ch, l.ksize, l.ksize});
                    g.dbias[static_cast<std::size_t>(li)] = Tensor<T>({l.out_ch});
                }
                for (int b = 0; b < B; ++b) {
                    ConstMatMap<T> dY(dout.ptr() + b * out_stride, l.out_ch, opix);
                    if (need_params) {
                        detail::im2col(x.ptr() + b * in_stride, l.in_ch, h, w, l.ksize, l.stride, cols.data());
                        ConstMatMap<T> C(cols.data(), ckk, opix);
                        MatMap<T> dW(g.dweight[static_cast<std::size_t>(li)].ptr(), l.out_ch, ckk);
                        dW.noalias() += dY * C.transpose();
                        for (int oc = 0; oc < l.out_ch; ++oc)
                            g.dbias[static_cast<std::size_t>(li)][oc] += dY.row(oc).sum();
                    }
                    if (need_dinput) {
                        MatMap<T> dC(dcols.data(), ckk, opix);
                        dC.noalias() = W.transpose() * dY;
                        detail::col2im_add(dcols.data(), l.in_ch, h, w, l.ksize, l.stride, din.ptr() + b * in_stride);
                    }
                }
                break;
            }
            case LayerKind::maxpool2d: {
                if (!need_dinput) break;
                din = Tensor<T>(x.shape);
                const auto& src = tape.pool_src[static_cast<std::size_t>(li)];
                const std::int64_t out_per = dout.numel() / B;
                const std::int64_t in_per = x.numel() / B;
                const T* dp = dout.ptr();
                T* q = din.ptr();
                for (int b = 0; b < B; ++b)
                    for (std::int64_t i = 0; i < out_per; ++i)
                        q[b * in_per + src[static_cast<std::size_t>(b * out_per + i)]] += dp[b * out_per + i];
                break;
            }
            case LayerKind::relu: {
                if (!need_dinput) break;
                din = dout;
                din.shape = x.shape;
                const T* xp = x.ptr();
                T* q = din.ptr();
                for (std::int64_t i = 0; i < din.numel(); ++i)
                    if (xp[i] <= T(0)) q[i] = T(0);
                break;
            }
            case LayerKind::flatten: {
                if (!need_dinput) break;
                din = dout;
                din.shape = x.shape;
                break;
            }
            case LayerKind::dense: {
                ConstMatMap<T> X(x.ptr(), B, l.in_features);
                ConstMatMap<T> dY(dout.ptr(), B, l.out_features);
                if (need_params) {
                    g.dweight[static_cast<std::size_t>(li)] = Tensor<T>({l.out_features, l.in_features});
                    g.dbias[static_cast<std::size_t>(li)] = Tensor<T>({l.out_features});
                    MatMap<T> dW(g.dweight[static_cast<std::size_t>(li)].ptr(), l.out_features, l.in_features);
                    dW.noalias() = dY.transpose() * X;
                    for (int j = 0; j < l.out_features; ++j)
                        g.dbias[static_cast<std::size_t>(li)][j] = dY.col(j).sum();
                }
                if (need_dinput) {
                    din = Tensor<T>(x.shape);
                    ConstMatMap<T> W(l.weight.ptr(), l.out_features, l.in_features);
                    MatMap<T> dX(din.ptr(), B, l.in_features);
                    dX.noalias() = dY * W;
                }
                break;
            }
        }
        if (!need_dinput) break;
        dout = std::move(din);
    }

    for (std::size_t i = 0; i < g.dweight.size(); ++i) {
        if (g.dweight[i].numel() > 0) ensure_finite(g.dweight[i], "weight gradient");
        if (g.dbias[i].numel() > 0) ensure_finite(g.dbias[i], "bias gradient");
    }
    g.logits = std::move(tape.acts.back());
    return g;
}

}  // namespace nr
