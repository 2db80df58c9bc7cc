#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "nr/checkpoint.hpp"
#include "nr/model_zoo.hpp"
#include "nr/network.hpp"
#include "nr/train.hpp"

#include <nlohmann/json.hpp>

using namespace nr;

namespace {

// small mixed net exercising every layer kind
template <typename T>
Network<T> make_test_net(std::uint64_t seed) {
    Network<T> net;
    net.input_shape = {2, 7, 7};
    net.num_classes = 4;
    using L = Layer<T>;
    net.layers.push_back(L::conv(2, 3, 3));
    net.layers.push_back(L::maxpool(2));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::flatten_());
    net.layers.push_back(L::dense(12, 5));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::dense(5, 4));
    net.maskable_layers = {0, 4};
    init_params(net, seed);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> d(0.0, 0.1);
    for (auto& l : net.layers)
        if (l.has_params())
            for (std::int64_t i = 0; i < l.bias.numel(); ++i) l.bias[i] = static_cast<T>(d(rng));
    return net;
}

template <typename T>
Tensor<T> random_batch(const std::vector<int>& sample_shape, int b, std::uint64_t seed) {
    std::vector<int> shape{b};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor<T> t(shape);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : t.data) v = static_cast<T>(u(rng));
    return t;
}

std::vector<int> random_labels(int b, int classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, classes - 1);
    std::vector<int> y(static_cast<std::size_t>(b));
    for (auto& v : y) v = u(rng);
    return y;
}

double loss_of(const Network<double>& net, const Tensor<double>& batch, const std::vector<int>& labels,
               const std::vector<NeuronMask>& masks = {}, const std::vector<LayerSwitch<double>>& switches = {}) {
    Tensor<double> logits = forward(net, batch, masks, switches);
    return softmax_cross_entropy(logits, labels);
}

double rel_err(double a, double f) { return std::abs(a - f) / std::max({1e-6, std::abs(a), std::abs(f)}); }

}  // namespace

TEST_CASE("forward: identity mask leaves logits unchanged") {
    auto net = make_test_net<float>(7);
    auto batch = random_batch<float>(net.input_shape, 4, 11);
    auto base = forward(net, batch);
    std::vector<NeuronMask> masks{NeuronMask::all_on(0, 3), NeuronMask::all_on(4, 5)};
    auto masked = forward(net, batch, masks);
    for (std::int64_t i = 0; i < base.numel(); ++i) CHECK(base[i] == masked[i]);
}

TEST_CASE("forward: uniform switch equals manually scaled pre-activation") {
    auto net = make_test_net<float>(3);
    auto batch = random_batch<float>(net.input_shape, 4, 5);
    const int d = 5;
    LayerSwitch<float> sw{4, std::vector<float>(d, 1.0f / d)};
    auto via_switch = forward(net, batch, {}, {sw});

    auto scaled = net;
    for (std::int64_t i = 0; i < scaled.layer(4).weight.numel(); ++i) scaled.layer(4).weight[i] /= d;
    for (std::int64_t i = 0; i < scaled.layer(4).bias.numel(); ++i) scaled.layer(4).bias[i] /= d;
    auto direct = forward(scaled, batch);
    for (std::int64_t i = 0; i < direct.numel(); ++i)
        CHECK(std::abs(via_switch[i] - direct[i]) <= 1e-5f * std::max(1.0f, std::abs(direct[i])));
}

TEST_CASE("forward: masking every unit of the last hidden layer freezes the logits") {
    auto net = make_test_net<float>(19);
    auto batch = random_batch<float>(net.input_shape, 6, 23);
    NeuronMask all_off{4, std::vector<std::uint8_t>(5, 0)};
    auto logits = forward(net, batch, {all_off});
    for (int b = 1; b < 6; ++b)
        for (int c = 0; c < 4; ++c) CHECK(logits[b * 4 + c] == logits[c]);
    // constant logits predict argmax(head bias) everywhere
    int expect = 0;
    for (int c = 1; c < 4; ++c)
        if (net.layer(6).bias[c] > net.layer(6).bias[expect]) expect = c;
    int got = 0;
    for (int c = 1; c < 4; ++c)
        if (logits[c] > logits[got]) got = c;
    CHECK(got == expect);
}

TEST_CASE("softmax rows sum to one") {
    auto net = make_test_net<float>(2);
    auto batch = random_batch<float>(net.input_shape, 8, 3);
    auto labels = random_labels(8, 4, 4);
    Tensor<float> probs;
    auto logits = forward(net, batch);
    softmax_cross_entropy(logits, labels, &probs);
    for (int b = 0; b < 8; ++b) {
        double s = 0;
        for (int c = 0; c < 4; ++c) s += probs[b * 4 + c];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("backward: zero-weight dense net bias gradient is softmax(0) - onehot averaged") {
    Network<float> net;
    net.input_shape = {6};
    net.num_classes = 3;
    net.layers.push_back(Layer<float>::dense(6, 3));
    net.maskable_layers = {};
    net.layer(0).weight.fill(0.0f);
    net.layer(0).bias.fill(0.0f);

    auto batch = random_batch<float>({6}, 9, 31);
    std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
    auto g = backward(net, batch, labels);
    std::vector<double> freq(3, 0.0);
    for (int y : labels) freq[static_cast<std::size_t>(y)] += 1.0 / 9;
    for (int c = 0; c < 3; ++c) {
        const double expect = 1.0 / 3 - freq[static_cast<std::size_t>(c)];
        CHECK(std::abs(g.dbias[0][c] - expect) < 1e-6);
    }
}

TEST_CASE("backward: analytic gradients match central finite differences (64-bit)") {
    auto net = make_test_net<double>(13);
    auto batch = random_batch<double>(net.input_shape, 3, 17);
    auto labels = random_labels(3, 4, 19);

    auto g = backward(net, batch, labels);

    const double h = 1e-5;
    double worst = 0.0;
    for (int li = 0; li < net.num_layers(); ++li) {
        auto& l = net.layer(li);
        if (!l.has_params()) continue;
        for (auto part : {0, 1}) {
            Tensor<double>& p = part == 0 ? l.weight : l.bias;
            const Tensor<double>& a = part == 0 ? g.dweight[static_cast<std::size_t>(li)] : g.dbias[static_cast<std::size_t>(li)];
            for (std::int64_t i = 0; i < p.numel(); ++i) {
                const double keep = p[i];
                p[i] = keep + h;
                const double up = loss_of(net, batch, labels);
                p[i] = keep - h;
                const double dn = loss_of(net, batch, labels);
                p[i] = keep;
                worst = std::max(worst, rel_err(a[i], (up - dn) / (2 * h)));
            }
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("backward: gradients under masks match finite differences and masked units get exact zeros") {
    auto net = make_test_net<double>(29);
    auto batch = random_batch<double>(net.input_shape, 3, 37);
    auto labels = random_labels(3, 4, 41);
    NeuronMask m0{0, {1, 0, 1}};
    NeuronMask m4{4, {1, 1, 0, 1, 0}};
    std::vector<NeuronMask> masks{m0, m4};

    auto g = backward(net, batch, labels, masks);

    // masked conv filter 1: whole incoming weight slice and bias gradient are exactly zero
    const auto& dw0 = g.dweight[0];
    const std::int64_t per_filter = dw0.numel() / 3;
    for (std::int64_t i = 0; i < per_filter; ++i) CHECK(dw0[per_filter + i] == 0.0);
    CHECK(g.dbias[0][1] == 0.0);
    // masked dense units 2 and 4 likewise
    for (int u : {2, 4}) {
        for (int i = 0; i < 12; ++i) CHECK(g.dweight[4][u * 12 + i] == 0.0);
        CHECK(g.dbias[4][u] == 0.0);
    }

    const double h = 1e-5;
    double worst = 0.0;
    for (int li : {0, 4}) {
        auto& l = net.layer(li);
        for (std::int64_t i = 0; i < l.weight.numel(); ++i) {
            const double keep = l.weight[i];
            l.weight[i] = keep + h;
            const double up = loss_of(net, batch, labels, masks);
            l.weight[i] = keep - h;
            const double dn = loss_of(net, batch, labels, masks);
            l.weight[i] = keep;
            worst = std::max(worst, rel_err(g.dweight[static_cast<std::size_t>(li)][i], (up - dn) / (2 * h)));
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("sgd_step: closed-form examples") {
    Network<float> net;
    net.input_shape = {2};
    net.num_classes = 2;
    net.layers.push_back(Layer<float>::dense(2, 2));
    net.layer(0).weight.fill(1.0f);
    auto state = SgdState<float>::make(net);

    Gradients<float> g;
    g.dweight.resize(1);
    g.dbias.resize(1);
    g.dweight[0] = Tensor<float>({2, 2});
    g.dbias[0] = Tensor<float>({2});

    SUBCASE("zero gradient, zero decay: params unchanged") {
        sgd_step(net, g, state, 0.1, 0.9, 0.0);
        for (int i = 0; i < 4; ++i) CHECK(net.layer(0).weight[i] == 1.0f);
    }
    SUBCASE("single step without momentum moves by lr*g") {
        g.dweight[0].fill(0.5f);
        sgd_step(net, g, state, 0.1, 0.0, 0.0);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(net.layer(0).weight[i] - (1.0f - 0.05f)) < 1e-7f);
    }
    SUBCASE("two steps with momentum unroll the recurrence") {
        g.dweight[0].fill(1.0f);
        sgd_step(net, g, state, 0.1, 0.9, 0.0);
        sgd_step(net, g, state, 0.1, 0.9, 0.0);
        // total = 0.1*g + 0.1*(g + 0.9*g)
        for (int i = 0; i < 4; ++i) CHECK(std::abs(net.layer(0).weight[i] - (1.0f - 0.29f)) < 1e-6f);
    }
    SUBCASE("lr must be positive") { CHECK_THROWS_AS(sgd_step(net, g, state, 0.0), InputError); }
}

TEST_CASE("train: zero epochs returns the net unchanged") {
    TrainSchedule sched;
    sched.epochs = 0;
    auto src = make_planted_data(32, 10, 5);
    PlantedTask task = make_planted_mlp(10, 10, 5);
    auto result = train(task.net, src, src, sched);
    for (int li = 0; li < task.net.num_layers(); ++li) {
        if (!task.net.layer(li).has_params()) continue;
        for (std::int64_t i = 0; i < task.net.layer(li).weight.numel(); ++i)
            CHECK(result.net.layer(li).weight[i] == task.net.layer(li).weight[i]);
    }
    CHECK(result.history.empty());
}

TEST_CASE("train: linearly separable toy set reaches 100% within 50 epochs") {
    Network<float> net;
    net.input_shape = {2};
    net.num_classes = 2;
    net.layers.push_back(Layer<float>::dense(2, 8));
    net.layers.push_back(Layer<float>::relu_());
    net.layers.push_back(Layer<float>::dense(8, 2));
    net.maskable_layers = {0};
    init_params(net, 123);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 128;
    Tensor<float> x({n, 2});
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
        double a = u(rng), b = u(rng);
        if (std::abs(a + b) < 0.1) a += a + b >= 0 ? 0.2 : -0.2;  // margin
        x[i * 2] = static_cast<float>(a);
        x[i * 2 + 1] = static_cast<float>(b);
        y[static_cast<std::size_t>(i)] = a + b > 0 ? 1 : 0;
    }
    TensorSource src(std::move(x), std::move(y));

    TrainSchedule sched;
    sched.epochs = 50;
    sched.batch_size = 32;
    sched.lr0 = 0.1;
    sched.weight_decay = 0.0;
    sched.patience = 0;
    sched.seed = 77;
    auto result = train(net, src, src, sched);
    CHECK(evaluate_accuracy(result.net, src) == 1.0);
}

TEST_CASE("train: identical seeds give bit-identical history") {
    PlantedTask task = make_planted_mlp(10, 10, 21);
    init_params(task.net, 50);  // train from random weights
    auto src = make_planted_data(64, 10, 22);
    TrainSchedule sched;
    sched.epochs = 5;
    sched.batch_size = 16;
    sched.lr0 = 0.05;
    sched.seed = 1234;
    sched.patience = 0;

    auto r1 = train(task.net, src, src, sched);
    auto r2 = train(task.net, src, src, sched);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t e = 0; e < r1.history.size(); ++e) {
        CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
        CHECK(r1.history[e].train_acc == r2.history[e].train_acc);
        CHECK(r1.history[e].val_acc == r2.history[e].val_acc);
    }
    for (std::int64_t i = 0; i < r1.net.layer(0).weight.numel(); ++i)
        CHECK(r1.net.layer(0).weight[i] == r2.net.layer(0).weight[i]);
}

TEST_CASE("train: divergence aborts with a diagnostic") {
    PlantedTask task = make_planted_mlp(6, 4, 3);
    init_params(task.net, 8);
    auto src = make_planted_data(64, 6, 9);
    TrainSchedule sched;
    sched.epochs = 40;
    sched.lr0 = 1e9;  // guaranteed blow-up
    sched.lr_floor = 1e9;
    sched.patience = 0;
    CHECK_THROWS_AS(train(task.net, src, src, sched), NumericError);
}

TEST_CASE("evaluate_accuracy: constant predictor scores the class frequency") {
    Network<float> net;
    net.input_shape = {3};
    net.num_classes = 10;
    net.layers.push_back(Layer<float>::dense(3, 10));
    net.layer(0).weight.fill(0.0f);
    net.layer(0).bias.fill(0.0f);
    net.layer(0).bias[0] = 1.0f;  // always predicts class 0

    Tensor<float> x({20, 3});
    std::vector<int> y(20, 5);
    y[0] = 0;
    y[1] = 0;  // 10% are class 0
    TensorSource src(std::move(x), std::move(y));
    CHECK(evaluate_accuracy(net, src) == doctest::Approx(0.1));

    Dataset none;
    none.rows = 1;
    none.cols = 3;
    ImageSource empty(none);
    CHECK_THROWS_AS(evaluate_accuracy(net, empty), InputError);
}

TEST_CASE("checkpoint: save/load round-trips bit-exactly") {
    auto net = build_lenet({4, 6, 20, 12}, 99);
    const std::string path = "test_checkpoint.nrckpt";
    nlohmann::json meta;
    meta["note"] = "unit";
    save_checkpoint(net, path, meta);
    nlohmann::json meta2;
    auto back = load_checkpoint(path, &meta2);
    CHECK(meta2["note"] == "unit");
    CHECK(back.maskable_layers == net.maskable_layers);
    REQUIRE(back.num_layers() == net.num_layers());
    for (int li = 0; li < net.num_layers(); ++li) {
        if (!net.layer(li).has_params()) continue;
        REQUIRE(back.layer(li).weight.shape == net.layer(li).weight.shape);
        for (std::int64_t i = 0; i < net.layer(li).weight.numel(); ++i)
            CHECK(back.layer(li).weight[i] == net.layer(li).weight[i]);
        for (std::int64_t i = 0; i < net.layer(li).bias.numel(); ++i)
            CHECK(back.layer(li).bias[i] == net.layer(li).bias[i]);
    }
    CHECK(param_fingerprint(back) == param_fingerprint(net));
    std::remove(path.c_str());
}

TEST_CASE("forward: shape mismatches and non-finite values raise") {
    auto net = make_test_net<float>(1);
    Tensor<float> bad({2, 1, 7, 7});
    CHECK_THROWS_AS(forward(net, bad), ShapeError);

    auto batch = random_batch<float>(net.input_shape, 2, 2);
    auto broken = net;
    broken.layer(0).weight[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(forward(broken, batch), NumericError);

    NeuronMask wrong{0, {1, 1}};  // length 2 != 3 filters
    CHECK_THROWS_AS(forward(net, batch, {wrong}), ShapeError);
}
