#include "nr/prune.hpp"

#include <algorithm>
#include <cstdio>

#include "nr/errors.hpp"

namespace nr {

const char* kParamConvention = "weights+biases";
const char* kFlopConvention = "mac=2flops; pool/act 1/elem";

std::vector<int> kept_units(const PruneSpec& spec, int layer_index, int width) {
    const auto kc = spec.keep_counts.find(layer_index);
    if (kc == spec.keep_counts.end()) {
        std::vector<int> all(static_cast<std::size_t>(width));
        for (int i = 0; i < width; ++i) all[static_cast<std::size_t>(i)] = i;
        return all;
    }
    const int keep = kc->second;
    if (keep < 1 || keep > width)
        throw InputError("keep count " + std::to_string(keep) + " out of range for layer of width " +
                         std::to_string(width));
    const auto rk = spec.rankings.find(layer_index);
    if (rk == spec.rankings.end()) throw InputError("no ranking supplied for pruned layer " + std::to_string(layer_index));
    if (static_cast<int>(rk->second.size()) != width)
        throw InputError("ranking length does not match layer width " + std::to_string(width));
    std::vector<int> kept(rk->second.begin(), rk->second.begin() + keep);
    std::sort(kept.begin(), kept.end());
    return kept;
}

namespace {

// Gathers rows (output units) of a [out, ...] tensor.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& t, const std::vector<int>& rows) {
    std::vector<int> shape = t.shape;
    shape[0] = static_cast<int>(rows.size());
    Tensor<T> out(shape);
    const std::int64_t per = t.numel() / t.dim(0);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(t.ptr() + static_cast<std::int64_t>(rows[r]) * per, per, out.ptr() + static_cast<std::int64_t>(r) * per);
    return out;
}

}  // namespace

NetworkF prune(const NetworkF& net, const PruneSpec& spec) {
    const auto shapes = trace_shapes(net);
    NetworkF out = net;

    for (int li : net.maskable_layers) {
        Layer<float>& l = out.layer(li);
        const int width = l.output_units();
        const std::vector<int> kept = kept_units(spec, li, width);
        if (static_cast<int>(kept.size()) == width) continue;

        // slice this layer's output units
        l.weight = take_rows(l.weight, kept);
        l.bias = take_rows(l.bias, kept);
        if (l.kind == LayerKind::conv2d)
            l.out_ch = static_cast<int>(kept.size());
        else
            l.out_features = static_cast<int>(kept.size());

        // slice the next linear layer's inputs to the kept units
        int next = -1;
        for (int lj = li + 1; lj < net.num_layers(); ++lj) {
            const LayerKind k = net.layer(lj).kind;
            if (k == LayerKind::conv2d || k == LayerKind::dense) {
                next = lj;
                break;
            }
        }
        if (next < 0) throw InputError("pruned layer has no downstream linear layer");
        Layer<float>& nl = out.layer(next);

        if (nl.kind == LayerKind::conv2d) {
            // weight [out, in, k, k] -> gather in-channel slices
            Tensor<float> w({nl.out_ch, static_cast<int>(kept.size()), nl.ksize, nl.ksize});
            const int kk = nl.ksize * nl.ksize;
            for (int oc = 0; oc < nl.out_ch; ++oc)
                for (std::size_t c = 0; c < kept.size(); ++c)
                    std::copy_n(nl.weight.ptr() + (static_cast<std::int64_t>(oc) * nl.in_ch + kept[c]) * kk, kk,
                                w.ptr() + (static_cast<std::int64_t>(oc) * static_cast<std::int64_t>(kept.size()) + static_cast<std::int64_t>(c)) * kk);
            nl.weight = std::move(w);
            nl.in_ch = static_cast<int>(kept.size());
        } else {
            // features per kept unit: 1 for dense-to-dense, a flattened
            // spatial block for conv-through-flatten
            const std::int64_t block = static_cast<std::int64_t>(nl.in_features) / width;
            Tensor<float> w({nl.out_features, static_cast<int>(kept.size() * block)});
            for (int of = 0; of < nl.out_features; ++of)
                for (std::size_t c = 0; c < kept.size(); ++c)
                    std::copy_n(nl.weight.ptr() + static_cast<std::int64_t>(of) * nl.in_features + kept[c] * block, block,
                                w.ptr() + (static_cast<std::int64_t>(of) * static_cast<std::int64_t>(kept.size()) + static_cast<std::int64_t>(c)) * block);
            nl.weight = std::move(w);
            nl.in_features = static_cast<int>(kept.size() * block);
        }
    }

    trace_shapes(out);  // composition check
    return out;
}

std::int64_t count_params(const NetworkF& net) {
    std::int64_t n = 0;
    for (const auto& l : net.layers)
        if (l.has_params()) n += l.weight.numel() + l.bias.numel();
    return n;
}

std::int64_t count_flops(const NetworkF& net) {
    const auto shapes = trace_shapes(net);
    std::int64_t flops = 0;
    for (int li = 0; li < net.num_layers(); ++li) {
        const auto& l = net.layer(li);
        const auto& os = shapes[static_cast<std::size_t>(li)];
        std::int64_t out_elems = 1;
        for (int d : os) out_elems *= d;
        switch (l.kind) {
            case LayerKind::conv2d:
                flops += 2LL * os[1] * os[2] * l.out_ch * l.in_ch * l.ksize * l.ksize;
                break;
            case LayerKind::dense:
                flops += 2LL * l.in_features * l.out_features;
                break;
            case LayerKind::maxpool2d:
            case LayerKind::relu:
                flops += out_elems;
                break;
            case LayerKind::flatten:
                break;
        }
    }
    return flops;
}

std::string compression_report_markdown(const CompressionReport& r) {
    char buf[512];
    std::string err_before = r.test_error_before < 0 ? "n/a" : [&] {
        char b[32];
        std::snprintf(b, sizeof(b), "%.2f%%", 100.0 * r.test_error_before);
        return std::string(b);
    }();
    std::string err_after = r.test_error_after < 0 ? "n/a" : [&] {
        char b[32];
        std::snprintf(b, sizeof(b), "%.2f%%", 100.0 * r.test_error_after);
        return std::string(b);
    }();
    std::snprintf(buf, sizeof(buf),
                  "| %s | %lld (%s) | %lld (%s) | %s | %s | %d |\n",
                  r.architecture.c_str(), static_cast<long long>(r.param_count), r.param_convention.c_str(),
                  static_cast<long long>(r.flop_count), r.flop_convention.c_str(), err_before.c_str(),
                  err_after.c_str(), r.retrain_epochs);
    return "| architecture | params | flops | error before | error after | retrain epochs |\n|---|---|---|---|---|---|\n" +
           std::string(buf);
}

}  // namespace nr
