#include "nr/layer_game.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "nr/parallel.hpp"
#include "nr/train.hpp"

namespace nr {

double accuracy_payoff(const NetworkF& net, int layer_index, const Coalition& coalition, const DataSource& eval_data) {
    if (coalition.n_players() != net.units_at(layer_index))
        throw InputError("coalition size does not match layer width");
    NeuronMask mask{layer_index, coalition.active_bits()};
    return evaluate_accuracy(net, eval_data, {mask});
}

CoalitionGame make_naive_layer_game(const NetworkF& net, int layer_index, const DataSource& eval_data) {
    const int n = net.units_at(layer_index);
    return CoalitionGame(
        n, [&net, layer_index, &eval_data](const Coalition& c) { return accuracy_payoff(net, layer_index, c, eval_data); },
        layer_index);
}

LayerGameEvaluator::LayerGameEvaluator(const NetworkF& net, int layer_index, const DataSource& eval_data,
                                       int batch_size) {
    const auto shapes = trace_shapes(net);
    n_units_ = net.units_at(layer_index);
    if (n_units_ == 0) throw InputError("layer has no maskable units");
    n_imgs_ = eval_data.size();
    if (n_imgs_ == 0) throw InputError("empty evaluation set");
    n_classes_ = net.num_classes;

    // locate the next linear layer; everything between must be a per-unit
    // map (relu/pool/flatten) for the contribution decomposition to hold
    int next_linear = -1;
    for (int li = layer_index + 1; li < net.num_layers(); ++li) {
        const LayerKind k = net.layer(li).kind;
        if (k == LayerKind::conv2d || k == LayerKind::dense) {
            next_linear = li;
            break;
        }
        if (k != LayerKind::relu && k != LayerKind::maxpool2d && k != LayerKind::flatten)
            throw InputError("unsupported layer between masked layer and next linear layer");
    }
    if (next_linear < 0) throw InputError("masked layer has no downstream linear layer");

    const Layer<float>& lin = net.layer(next_linear);
    tail_in_shape_ = shapes[static_cast<std::size_t>(next_linear)];
    next_dim_ = 1;
    for (int d : tail_in_shape_) next_dim_ *= d;

    tail_ = NetworkF{};
    tail_.input_shape = tail_in_shape_;
    tail_.num_classes = net.num_classes;
    for (int li = next_linear + 1; li < net.num_layers(); ++li) tail_.layers.push_back(net.layer(li));
    if (tail_.layers.empty() && next_dim_ != n_classes_)
        throw ShapeError("tail-less evaluator expects the next linear layer to be the classifier head");

    // prefix: input -> masked layer's post-bias pre-activation
    NetworkF prefix;
    prefix.input_shape = net.input_shape;
    prefix.num_classes = net.num_classes;
    for (int li = 0; li <= layer_index; ++li) prefix.layers.push_back(net.layer(li));
    // between: pre-activation -> input of the next linear layer
    NetworkF between;
    between.input_shape = shapes[static_cast<std::size_t>(layer_index)];
    between.num_classes = net.num_classes;
    for (int li = layer_index + 1; li < next_linear; ++li) between.layers.push_back(net.layer(li));

    base_.assign(static_cast<std::size_t>(next_dim_), 0.0f);
    if (lin.kind == LayerKind::dense) {
        for (int j = 0; j < lin.out_features; ++j) base_[static_cast<std::size_t>(j)] = lin.bias[j];
    } else {
        const int per_ch = next_dim_ / lin.out_ch;
        for (int oc = 0; oc < lin.out_ch; ++oc)
            for (int p = 0; p < per_ch; ++p) base_[static_cast<std::size_t>(oc * per_ch + p)] = lin.bias[oc];
    }

    unit_contrib_.assign(static_cast<std::size_t>(n_units_) * n_imgs_ * next_dim_, 0.0f);
    labels_.resize(static_cast<std::size_t>(n_imgs_));

    const std::vector<int> z_shape = between.layers.empty()
                                         ? shapes[static_cast<std::size_t>(layer_index)]
                                         : trace_shapes(between).back();
    std::int64_t z_per_sample = 1;
    for (int d : z_shape) z_per_sample *= d;
    const std::int64_t block = z_per_sample / n_units_;  // contiguous per-unit slice of z

    for (std::int64_t lo = 0; lo < n_imgs_; lo += batch_size) {
        const std::int64_t hi = std::min<std::int64_t>(n_imgs_, lo + batch_size);
        const int B = static_cast<int>(hi - lo);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(B));
        std::iota(idx.begin(), idx.end(), lo);
        Tensor<float> x = eval_data.make_batch(idx);
        for (int b = 0; b < B; ++b) labels_[static_cast<std::size_t>(lo + b)] = eval_data.label(lo + b);

        Tensor<float> act = forward(prefix, x);
        Tensor<float> z = between.layers.empty() ? std::move(act) : forward(between, act);

        if (lin.kind == LayerKind::dense) {
            // u_j = z[:, block_j] * W[:, block_j]^T
            ConstMatMap<float> Z(z.ptr(), B, static_cast<int>(z_per_sample));
            ConstMatMap<float> W(lin.weight.ptr(), lin.out_features, lin.in_features);
            parallel_for(n_units_, [&](std::int64_t j0, std::int64_t j1) {
                for (std::int64_t j = j0; j < j1; ++j) {
                    float* dst = unit_contrib_.data() + (j * n_imgs_ + lo) * next_dim_;
                    MatMap<float> U(dst, B, next_dim_);
                    U.noalias() = Z.middleCols(j * block, block) *
                                  W.middleCols(j * block, block).transpose();
                }
            });
        } else {
            // u_j = conv(z with only channel j) minus bias: one single-channel
            // im2col against the kernel slice for input channel j
            const int h = z_shape[1], w = z_shape[2];
            const int oh = tail_in_shape_[1], ow = tail_in_shape_[2];
            const int opix = oh * ow;
            const int kk = lin.ksize * lin.ksize;
            parallel_for(n_units_, [&](std::int64_t j0, std::int64_t j1) {
                std::vector<float> cols(static_cast<std::size_t>(kk) * opix);
                std::vector<float> wslice(static_cast<std::size_t>(lin.out_ch) * kk);
                for (std::int64_t j = j0; j < j1; ++j) {
                    for (int oc = 0; oc < lin.out_ch; ++oc)
                        for (int t = 0; t < kk; ++t)
                            wslice[static_cast<std::size_t>(oc * kk + t)] =
                                lin.weight[(static_cast<std::int64_t>(oc) * lin.in_ch + j) * kk + t];
                    ConstMatMap<float> Wj(wslice.data(), lin.out_ch, kk);
                    for (int b = 0; b < B; ++b) {
                        const float* zc = z.ptr() + (static_cast<std::int64_t>(b) * lin.in_ch + j) * h * w;
                        detail::im2col(zc, 1, h, w, lin.ksize, lin.stride, cols.data());
                        ConstMatMap<float> C(cols.data(), kk, opix);
                        float* dst = unit_contrib_.data() + (j * n_imgs_ + lo + b) * next_dim_;
                        MatMap<float> U(dst, lin.out_ch, opix);
                        U.noalias() = Wj * C;
                    }
                }
            });
        }
    }
}

double LayerGameEvaluator::accuracy_from_preact(const float* acc) const {
    std::int64_t correct = 0;
    if (tail_.layers.empty()) {
        for (std::int64_t i = 0; i < n_imgs_; ++i) {
            const float* row = acc + i * next_dim_;
            int best = 0;
            for (int c = 1; c < n_classes_; ++c)
                if (row[c] > row[best]) best = c;
            if (best == labels_[static_cast<std::size_t>(i)]) ++correct;
        }
    } else {
        std::vector<int> shape{static_cast<int>(n_imgs_)};
        shape.insert(shape.end(), tail_in_shape_.begin(), tail_in_shape_.end());
        Tensor<float> in(shape, std::vector<float>(acc, acc + n_imgs_ * next_dim_));
        Tensor<float> logits = forward(tail_, in);
        for (std::int64_t i = 0; i < n_imgs_; ++i) {
            const float* row = logits.ptr() + i * n_classes_;
            int best = 0;
            for (int c = 1; c < n_classes_; ++c)
                if (row[c] > row[best]) best = c;
            if (best == labels_[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n_imgs_);
}

double LayerGameEvaluator::payoff(const Coalition& coalition) const {
    if (coalition.n_players() != n_units_) throw InputError("coalition/evaluator width mismatch");
    std::vector<float> acc(static_cast<std::size_t>(n_imgs_) * next_dim_);
    for (std::int64_t i = 0; i < n_imgs_; ++i)
        std::copy(base_.begin(), base_.end(), acc.begin() + i * next_dim_);
    const std::int64_t per = n_imgs_ * next_dim_;
    for (int j : coalition.members()) {
        const float* u = unit_contrib_.data() + static_cast<std::int64_t>(j) * per;
        float* a = acc.data();
        for (std::int64_t i = 0; i < per; ++i) a[i] += u[i];
    }
    return accuracy_from_preact(acc.data());
}

void LayerGameEvaluator::run_range(std::uint64_t t0, std::uint64_t t1, std::vector<double>& out) const {
    const std::int64_t per = n_imgs_ * next_dim_;
    // double accumulator: tens of millions of +/- updates walk through it
    std::vector<double> acc(static_cast<std::size_t>(per));
    std::vector<float> accf(static_cast<std::size_t>(per));
    const std::uint64_t g0 = t0 ^ (t0 >> 1);
    for (std::int64_t i = 0; i < n_imgs_; ++i)
        for (int d = 0; d < next_dim_; ++d)
            acc[static_cast<std::size_t>(i * next_dim_ + d)] = static_cast<double>(base_[static_cast<std::size_t>(d)]);
    for (int j = 0; j < n_units_; ++j)
        if ((g0 >> j) & 1u) {
            const float* u = unit_contrib_.data() + static_cast<std::int64_t>(j) * per;
            for (std::int64_t i = 0; i < per; ++i) acc[static_cast<std::size_t>(i)] += u[i];
        }

    const bool headless = tail_.layers.empty();
    for (std::uint64_t t = t0; t < t1; ++t) {
        if (t != t0) {
            const int j = std::countr_zero(t);
            const std::uint64_t g = t ^ (t >> 1);
            const bool added = (g >> j) & 1u;
            const float* u = unit_contrib_.data() + static_cast<std::int64_t>(j) * per;
            if (added)
                for (std::int64_t i = 0; i < per; ++i) acc[static_cast<std::size_t>(i)] += u[i];
            else
                for (std::int64_t i = 0; i < per; ++i) acc[static_cast<std::size_t>(i)] -= u[i];
        }
        const std::uint64_t mask = t ^ (t >> 1);
        if (headless) {
            std::int64_t correct = 0;
            for (std::int64_t i = 0; i < n_imgs_; ++i) {
                const double* row = acc.data() + i * next_dim_;
                int best = 0;
                for (int c = 1; c < n_classes_; ++c)
                    if (row[c] > row[best]) best = c;
                if (best == labels_[static_cast<std::size_t>(i)]) ++correct;
            }
            out[static_cast<std::size_t>(mask)] = static_cast<double>(correct) / static_cast<double>(n_imgs_);
        } else {
            for (std::int64_t i = 0; i < per; ++i) accf[static_cast<std::size_t>(i)] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
            out[static_cast<std::size_t>(mask)] = accuracy_from_preact(accf.data());
        }
    }
}

void LayerGameEvaluator::payoff_all(std::vector<double>& out) const {
    if (n_units_ > 25) throw InputError("power-set evaluation limited to 25 units");
    const std::uint64_t total = std::uint64_t(1) << n_units_;
    out.assign(static_cast<std::size_t>(total), 0.0);
    const int workers = worker_count();
    if (workers <= 1 || total < 1024) {
        run_range(0, total, out);
        return;
    }
    parallel_for(static_cast<std::int64_t>(workers), [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const std::uint64_t lo = total / workers * static_cast<std::uint64_t>(c);
            const std::uint64_t hi = c + 1 == workers ? total : total / workers * static_cast<std::uint64_t>(c + 1);
            run_range(lo, hi, out);
        }
    });
}

CoalitionGame make_fast_layer_game(std::shared_ptr<LayerGameEvaluator> eval, int layer_index) {
    CoalitionGame game(eval->n_units(), [eval](const Coalition& c) { return eval->payoff(c); }, layer_index);
    game.set_bulk_fn([eval](std::vector<double>& out) { eval->payoff_all(out); });
    return game;
}

}  // namespace nr
