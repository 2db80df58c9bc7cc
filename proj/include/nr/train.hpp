#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nr/dataset.hpp"
#include "nr/network.hpp"

namespace nr {

// Classic momentum SGD; weight decay is added to the gradient.
//   v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v
template <typename T>
struct SgdState {
    std::vector<Tensor<T>> vel_w, vel_b;

    static SgdState make(const Network<T>& net) {
        SgdState s;
        s.vel_w.reserve(net.layers.size());
        s.vel_b.reserve(net.layers.size());
        for (const auto& l : net.layers) {
            s.vel_w.push_back(l.has_params() ? Tensor<T>(l.weight.shape) : Tensor<T>());
            s.vel_b.push_back(l.has_params() ? Tensor<T>(l.bias.shape) : Tensor<T>());
        }
        return s;
    }
};

template <typename T>
void sgd_step(Network<T>& net, const Gradients<T>& g, SgdState<T>& state, double lr, double momentum = 0.9,
              double weight_decay = 5e-4) {
    if (!(lr > 0)) throw InputError("sgd_step: lr must be > 0");
    for (int li = 0; li < net.num_layers(); ++li) {
        Layer<T>& l = net.layer(li);
        if (!l.has_params()) continue;
        const auto& dw = g.dweight[static_cast<std::size_t>(li)];
        const auto& db = g.dbias[static_cast<std::size_t>(li)];
        if (dw.numel() == 0) continue;  // not reached by a partial backward
        if (!dw.same_shape(l.weight) || !db.same_shape(l.bias)) throw ShapeError("sgd_step: gradient shape mismatch");
        auto& vw = state.vel_w[static_cast<std::size_t>(li)];
        auto& vb = state.vel_b[static_cast<std::size_t>(li)];
        for (std::int64_t i = 0; i < l.weight.numel(); ++i) {
            const T upd = dw[i] + static_cast<T>(weight_decay) * l.weight[i];
            vw[i] = static_cast<T>(momentum) * vw[i] + upd;
            l.weight[i] -= static_cast<T>(lr) * vw[i];
        }
        for (std::int64_t i = 0; i < l.bias.numel(); ++i) {
            const T upd = db[i] + static_cast<T>(weight_decay) * l.bias[i];
            vb[i] = static_cast<T>(momentum) * vb[i] + upd;
            l.bias[i] -= static_cast<T>(lr) * vb[i];
        }
    }
}

struct TrainSchedule {
    int epochs = 30;
    int batch_size = 128;
    double lr0 = 0.1;
    double lr_floor = 0.001;
    std::vector<double> milestones = {0.5, 0.75};  // x0.1 at these fractions of the epoch budget
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int patience = 10;  // early stopping on validation accuracy; <=0 disables
    std::uint64_t seed = 0;

    double lr_at(int epoch) const {
        double lr = lr0;
        for (double m : milestones)
            if (epoch >= static_cast<int>(m * epochs)) lr *= 0.1;
        return std::max(lr, lr_floor);
    }
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    Network<float> net;
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_acc = 0.0;
};

// Fraction of samples whose argmax(logits) equals the label. Deterministic
// at any worker count (integer reduction).
double evaluate_accuracy(const NetworkF& net, const DataSource& data, const std::vector<NeuronMask>& masks = {},
                         int batch_size = 256);

// SGD training with the milestone schedule and early stopping; returns the
// best-validation checkpoint, not the last.
TrainResult train(const NetworkF& net, const DataSource& train_data, const DataSource& val_data,
                  const TrainSchedule& schedule);

}  // namespace nr
