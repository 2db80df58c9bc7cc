#pragma once

#include <string>
#include <vector>

#include "nr/tensor.hpp"

namespace nr {

enum class LayerKind { conv2d, maxpool2d, relu, flatten, dense };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

template <typename T>
struct Layer {
    LayerKind kind = LayerKind::relu;

    // conv2d: weight [out_ch, in_ch, k, k], bias [out_ch]
    // dense:  weight [out_features, in_features], bias [out_features]
    Tensor<T> weight, bias;

    int in_ch = 0, out_ch = 0, ksize = 0, stride = 1;  // conv2d
    int pool = 2;                                      // maxpool2d window == stride
    int in_features = 0, out_features = 0;             // dense

    bool has_params() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }

    // Width of the maskable unit vector: conv channels or dense features.
    int output_units() const {
        if (kind == LayerKind::conv2d) return out_ch;
        if (kind == LayerKind::dense) return out_features;
        return 0;
    }

    static Layer conv(int in_ch, int out_ch, int ksize, int stride = 1) {
        Layer l;
        l.kind = LayerKind::conv2d;
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        l.ksize = ksize;
        l.stride = stride;
        l.weight = Tensor<T>({out_ch, in_ch, ksize, ksize});
        l.bias = Tensor<T>({out_ch});
        return l;
    }
    static Layer maxpool(int window = 2) {
        Layer l;
        l.kind = LayerKind::maxpool2d;
        l.pool = window;
        return l;
    }
    static Layer relu_() {
        Layer l;
        l.kind = LayerKind::relu;
        return l;
    }
    static Layer flatten_() {
        Layer l;
        l.kind = LayerKind::flatten;
        return l;
    }
    static Layer dense(int in_features, int out_features) {
        Layer l;
        l.kind = LayerKind::dense;
        l.in_features = in_features;
        l.out_features = out_features;
        l.weight = Tensor<T>({out_features, in_features});
        l.bias = Tensor<T>({out_features});
        return l;
    }

    template <typename U>
    Layer<U> cast() const {
        Layer<U> o;
        o.kind = kind;
        o.weight = weight.template cast<U>();
        o.bias = bias.template cast<U>();
        o.in_ch = in_ch;
        o.out_ch = out_ch;
        o.ksize = ksize;
        o.stride = stride;
        o.pool = pool;
        o.in_features = in_features;
        o.out_features = out_features;
        return o;
    }
};

}  // namespace nr
