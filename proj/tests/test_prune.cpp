#include <doctest.h>

#include <numeric>
#include <random>

#include "nr/checkpoint.hpp"
#include "nr/model_zoo.hpp"
#include "nr/prune.hpp"
#include "nr/train.hpp"

using namespace nr;

namespace {

Tensor<float> random_images(int b, std::uint64_t seed) {
    Tensor<float> t({b, 1, 28, 28});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : t.data) v = static_cast<float>(u(rng));
    return t;
}

PruneSpec spec_for(const NetworkF& net, const std::map<int, int>& keeps, std::uint64_t seed) {
    PruneSpec spec;
    spec.keep_counts = keeps;
    std::mt19937_64 rng(seed);
    for (auto [li, keep] : keeps) {
        std::vector<int> order(static_cast<std::size_t>(net.units_at(li)));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        spec.rankings[li] = order;
    }
    spec.ranking_method = "random";
    return spec;
}

}  // namespace

TEST_CASE("prune: keep-everything leaves the function unchanged") {
    auto net = build_lenet({6, 8, 24, 10}, 7);
    PruneSpec spec;  // no keep_counts: everything kept
    auto pruned = prune(net, spec);
    CHECK(count_params(pruned) == count_params(net));
    auto x = random_images(16, 3);
    auto a = forward(net, x);
    auto b = forward(pruned, x);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6f);
}

TEST_CASE("prune: sliced network equals the masked original on random inputs") {
    auto net = build_lenet({6, 8, 24, 10}, 17);
    const std::map<int, int> keeps = {{0, 3}, {3, 5}, {7, 11}, {9, 6}};
    auto spec = spec_for(net, keeps, 23);
    auto pruned = prune(net, spec);
    CHECK(arch_string(pruned) == "3-5-11-6");

    // masked forward on the original
    std::vector<NeuronMask> masks;
    for (auto [li, keep] : keeps) {
        auto kept = kept_units(spec, li, net.units_at(li));
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(net.units_at(li)), 0);
        for (int u : kept) bits[static_cast<std::size_t>(u)] = 1;
        masks.push_back(NeuronMask{li, bits});
    }

    auto x = random_images(100, 5);
    auto masked = forward(net, x, masks);
    auto sliced = forward(pruned, x);
    REQUIRE(masked.shape == sliced.shape);
    float worst = 0.0f;
    for (std::int64_t i = 0; i < masked.numel(); ++i) worst = std::max(worst, std::abs(masked[i] - sliced[i]));
    CHECK(worst <= 1e-6f);
}

TEST_CASE("prune: mask equivalence holds layer by layer (single-unit removal)") {
    auto net = build_lenet({4, 5, 12, 8}, 29);
    auto x = random_images(20, 31);
    for (int li : net.maskable_layers) {
        const int width = net.units_at(li);
        PruneSpec spec;
        spec.keep_counts[li] = width - 1;
        std::vector<int> order(static_cast<std::size_t>(width));
        std::iota(order.begin(), order.end(), 0);
        std::rotate(order.begin(), order.begin() + 1, order.end());  // drop unit 0
        spec.rankings[li] = order;
        auto pruned = prune(net, spec);

        std::vector<std::uint8_t> bits(static_cast<std::size_t>(width), 1);
        bits[0] = 0;
        auto masked = forward(net, x, {NeuronMask{li, bits}});
        auto sliced = forward(pruned, x);
        for (std::int64_t i = 0; i < masked.numel(); ++i) CHECK(std::abs(masked[i] - sliced[i]) <= 1e-6f);
    }
}

TEST_CASE("prune: bad keep counts are rejected") {
    auto net = build_lenet({4, 5, 12, 8}, 1);
    PruneSpec spec;
    spec.keep_counts[0] = 5;  // width is 4
    spec.rankings[0] = {0, 1, 2, 3};
    CHECK_THROWS_AS(prune(net, spec), InputError);
    PruneSpec no_rank;
    no_rank.keep_counts[0] = 2;
    CHECK_THROWS_AS(prune(net, no_rank), InputError);
}

TEST_CASE("count_params closed forms") {
    NetworkF dense_net;
    dense_net.input_shape = {10};
    dense_net.num_classes = 5;
    dense_net.layers.push_back(Layer<float>::dense(10, 5));
    CHECK(count_params(dense_net) == 55);

    NetworkF conv_net;
    conv_net.input_shape = {1, 28, 28};
    conv_net.num_classes = 5;
    conv_net.layers.push_back(Layer<float>::conv(1, 5, 5));
    CHECK(count_params(conv_net) == 130);

    // the full pruned lenet shape used in the compression runs
    auto lenet = build_lenet({5, 7, 45, 20}, 3);
    CHECK(count_params(lenet) == 130 + (7 * 5 * 25 + 7) + (112 * 45 + 45) + (45 * 20 + 20) + (20 * 10 + 10));
    CHECK(count_params(lenet) == 7227);
}

TEST_CASE("count_flops documented conventions") {
    NetworkF dense_net;
    dense_net.input_shape = {10};
    dense_net.num_classes = 5;
    dense_net.layers.push_back(Layer<float>::dense(10, 5));
    CHECK(count_flops(dense_net) == 100);

    NetworkF relu_net;
    relu_net.input_shape = {100};
    relu_net.num_classes = 2;
    relu_net.layers.push_back(Layer<float>::relu_());
    CHECK(count_flops(relu_net) == 100);

    // conv(1->5,5x5) on 28x28: 2 * 24*24 * 5 * 1 * 25
    NetworkF conv_net;
    conv_net.input_shape = {1, 28, 28};
    conv_net.num_classes = 2;
    conv_net.layers.push_back(Layer<float>::conv(1, 5, 5));
    CHECK(count_flops(conv_net) == 2LL * 576 * 5 * 25);
}

TEST_CASE("retrain smoke: warm start preserves shape and improves a damaged net") {
    auto ds = make_synthetic_digits(1200, 5);
    ImageSource src(ds);
    auto net = build_lenet({4, 5, 16, 8}, 11);
    TrainSchedule sched;
    sched.epochs = 2;
    sched.batch_size = 64;
    sched.lr0 = 0.05;
    sched.patience = 0;
    sched.seed = 3;
    auto trained = train(net, src, src, sched);

    PruneSpec spec;
    spec.keep_counts[3] = 3;
    std::vector<int> order(5);
    std::iota(order.begin(), order.end(), 0);
    spec.rankings[3] = order;
    auto pruned = prune(trained.net, spec);
    const double cut_acc = evaluate_accuracy(pruned, src);

    auto retrained = train(pruned, src, src, sched);
    CHECK(evaluate_accuracy(retrained.net, src) >= cut_acc - 1e-9);
    CHECK(arch_string(retrained.net) == "4-3-16-8");
}
