#include "nr/train.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>

#include "nr/parallel.hpp"

namespace nr {

double evaluate_accuracy(const NetworkF& net, const DataSource& data, const std::vector<NeuronMask>& masks,
                         int batch_size) {
    const std::int64_t n = data.size();
    if (n == 0) throw InputError("evaluate_accuracy: empty dataset");
    const std::int64_t n_batches = (n + batch_size - 1) / batch_size;
    std::vector<std::int64_t> correct_per_batch(static_cast<std::size_t>(n_batches), 0);

    parallel_for(n_batches, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const std::int64_t lo = c * batch_size;
            const std::int64_t hi = std::min<std::int64_t>(n, lo + batch_size);
            std::vector<std::int64_t> idx(static_cast<std::size_t>(hi - lo));
            std::iota(idx.begin(), idx.end(), lo);
            Tensor<float> batch = data.make_batch(idx);
            Tensor<float> logits = forward(net, batch, masks);
            const int C = logits.dim(1);
            std::int64_t correct = 0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const float* row = logits.ptr() + static_cast<std::int64_t>(i) * C;
                int best = 0;
                for (int k = 1; k < C; ++k)
                    if (row[k] > row[best]) best = k;
                if (best == data.label(idx[i])) ++correct;
            }
            correct_per_batch[static_cast<std::size_t>(c)] = correct;
        }
    });

    std::int64_t total = 0;
    for (auto c : correct_per_batch) total += c;
    return static_cast<double>(total) / static_cast<double>(n);
}

TrainResult train(const NetworkF& net, const DataSource& train_data, const DataSource& val_data,
                  const TrainSchedule& schedule) {
    TrainResult result;
    result.net = net;
    if (schedule.epochs <= 0) return result;

    SgdState<float> opt = SgdState<float>::make(result.net);
    std::mt19937_64 rng(schedule.seed);

    const std::int64_t n = train_data.size();
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    NetworkF best = result.net;
    int since_best = 0;
    // the starting point competes as epoch -1, so a warm start is never
    // replaced by a strictly worse checkpoint
    result.best_val_acc = evaluate_accuracy(result.net, val_data);
    result.best_epoch = -1;

    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        const double lr = schedule.lr_at(epoch);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::int64_t correct = 0;
        std::int64_t seen = 0;
        for (std::int64_t lo = 0; lo < n; lo += schedule.batch_size) {
            const std::int64_t hi = std::min<std::int64_t>(n, lo + schedule.batch_size);
            std::vector<std::int64_t> idx(order.begin() + lo, order.begin() + hi);
            Tensor<float> batch = train_data.make_batch(idx);
            std::vector<int> labels = train_data.gather_labels(idx);

            Gradients<float> g = backward(result.net, batch, labels);
            if (!std::isfinite(g.loss))
                throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                   ", sample offset " + std::to_string(lo));
            const Tensor<float>& logits = g.logits;
            const int C = logits.dim(1);
            for (std::size_t i = 0; i < labels.size(); ++i) {
                const float* row = logits.ptr() + static_cast<std::int64_t>(i) * C;
                int bestc = 0;
                for (int k = 1; k < C; ++k)
                    if (row[k] > row[bestc]) bestc = k;
                if (bestc == labels[i]) ++correct;
            }
            sgd_step(result.net, g, opt, lr, schedule.momentum, schedule.weight_decay);
            loss_sum += g.loss * static_cast<double>(hi - lo);
            seen += hi - lo;
        }

        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.train_loss = loss_sum / static_cast<double>(seen);
        st.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        st.val_acc = evaluate_accuracy(result.net, val_data);
        result.history.push_back(st);

        if (st.val_acc > result.best_val_acc) {
            result.best_val_acc = st.val_acc;
            result.best_epoch = epoch;
            best = result.net;
            since_best = 0;
        } else if (schedule.patience > 0 && ++since_best >= schedule.patience) {
            break;
        }
    }

    result.net = std::move(best);
    return result;
}

}  // namespace nr
