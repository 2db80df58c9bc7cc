// Acceptance suite: one pass/fail line per criterion.
//
//   1 shapley correctness (exact forms, axioms)         no data needed
//   2 sampling unbiasedness + 1/sqrt(m) error decay     no data needed
//   3 dirichlet KL closed form vs Monte Carlo           no data needed
//   4 gradient checks for every layer kind + switches   no data needed
//   5 planted-signal recovery by both ranking methods   no data needed
//   6 end-to-end MNIST: training, exhaustive/sampled    requires the four
//     shapley, switches, cross-method top-5 overlap     MNIST IDX files
//   7 compression to 5-7-45-20 with retraining          requires MNIST
//   8 prune/mask forward equivalence                    no data needed
//
// Criteria 6 and 7 cache their expensive artifacts under --out and resume
// from them, so interrupted runs pick up where they left off.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nr/checkpoint.hpp"
#include "nr/dataset.hpp"
#include "nr/layer_game.hpp"
#include "nr/model_zoo.hpp"
#include "nr/prune.hpp"
#include "nr/rank.hpp"
#include "nr/shapley.hpp"
#include "nr/switch_vi.hpp"
#include "nr/train.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace nr;

namespace {

struct Options {
    std::vector<int> criteria;
    std::string data_dir;
    std::string out_dir = "acceptance_out";
    int workers = 2;
    int seeds = 5;          // seeds for criterion 6
    std::int64_t nu_limit = 1500;  // characteristic-function evaluation set cap
};

enum class Outcome { pass, fail, skip };

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double s() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::vector<double> random_table(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> t(std::size_t(1) << n);
    for (auto& x : t) x = u(rng);
    return t;
}

// ---------------------------------------------------------------------- C1

Outcome criterion1(const Options&, std::string& detail) {
    double worst_gap = 0.0, worst_eff = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + trial % 7;
        auto table = random_table(n, 9000 + static_cast<std::uint64_t>(trial));
        auto g1 = CoalitionGame::from_table(n, table);
        auto g2 = CoalitionGame::from_table(n, table);
        auto a = exact_shapley_subsets(g1);
        auto b = exact_shapley_permutations(g2);
        for (int i = 0; i < n; ++i)
            worst_gap = std::max(worst_gap, std::abs(a.values[static_cast<std::size_t>(i)] - b.values[static_cast<std::size_t>(i)]));
        const double total = table.back() - table.front();
        worst_eff = std::max(worst_eff, std::abs(std::accumulate(a.values.begin(), a.values.end(), 0.0) - total));
        worst_eff = std::max(worst_eff, std::abs(std::accumulate(b.values.begin(), b.values.end(), 0.0) - total));
    }

    // symmetry: a game that treats players 0 and 1 identically
    bool symmetry_ok = true;
    {
        const int n = 6;
        auto rest = random_table(n - 2, 31);
        std::vector<double> table(std::size_t(1) << n);
        for (std::uint64_t m = 0; m < table.size(); ++m) {
            const int both = static_cast<int>((m & 1) + ((m >> 1) & 1));
            table[m] = rest[m >> 2] + 0.4 * both + (both == 2 ? 0.15 : 0.0);
        }
        auto g = CoalitionGame::from_table(n, table);
        auto r = exact_shapley_subsets(g);
        symmetry_ok = std::abs(r.values[0] - r.values[1]) <= 1e-12;
    }
    // null player
    bool null_ok = true;
    {
        const int n = 6;
        auto base = random_table(n - 1, 37);
        std::vector<double> table(std::size_t(1) << n);
        for (std::uint64_t m = 0; m < table.size(); ++m)
            table[m] = base[(m & 0b111) | ((m >> 4) << 3)];  // player 3 is irrelevant
        auto g = CoalitionGame::from_table(n, table);
        auto r = exact_shapley_subsets(g);
        null_ok = std::abs(r.values[3]) <= 1e-12;
    }
    // linearity
    bool lin_ok = true;
    {
        const int n = 7;
        auto t1 = random_table(n, 41), t2 = random_table(n, 43);
        std::vector<double> ts(t1.size());
        for (std::size_t i = 0; i < t1.size(); ++i) ts[i] = t1[i] + t2[i];
        auto g1 = CoalitionGame::from_table(n, t1);
        auto g2 = CoalitionGame::from_table(n, t2);
        auto gs = CoalitionGame::from_table(n, ts);
        auto r1 = exact_shapley_subsets(g1), r2 = exact_shapley_subsets(g2), rs = exact_shapley_subsets(gs);
        for (int i = 0; i < n; ++i)
            lin_ok = lin_ok && std::abs(rs.values[static_cast<std::size_t>(i)] - r1.values[static_cast<std::size_t>(i)] -
                                        r2.values[static_cast<std::size_t>(i)]) <= 1e-12;
    }

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "form gap %.2e (<=1e-12), efficiency %.2e (<=1e-9), symmetry %s, null %s, linearity %s", worst_gap,
                  worst_eff, symmetry_ok ? "ok" : "BAD", null_ok ? "ok" : "BAD", lin_ok ? "ok" : "BAD");
    detail = buf;
    return worst_gap <= 1e-12 && worst_eff <= 1e-9 && symmetry_ok && null_ok && lin_ok ? Outcome::pass : Outcome::fail;
}

// ---------------------------------------------------------------------- C2

Outcome criterion2(const Options&, std::string& detail) {
    const int n = 8;
    auto table = random_table(n, 4242);
    auto exact_game = CoalitionGame::from_table(n, table);
    const auto exact = exact_shapley_subsets(exact_game).values;

    // 200 runs at m=200: per-player mean within 3 standard errors
    const int runs = 200;
    std::vector<std::vector<double>> estimates;
    estimates.reserve(runs);
    for (int r = 0; r < runs; ++r) {
        auto g = CoalitionGame::from_table(n, table);
        estimates.push_back(sampled_shapley_permutations(g, 200, 10000 + static_cast<std::uint64_t>(r)).values);
    }
    double worst_z = 0.0;
    for (int i = 0; i < n; ++i) {
        double mean = 0.0, var = 0.0;
        for (const auto& e : estimates) mean += e[static_cast<std::size_t>(i)];
        mean /= runs;
        for (const auto& e : estimates) var += (e[static_cast<std::size_t>(i)] - mean) * (e[static_cast<std::size_t>(i)] - mean);
        var /= (runs - 1);
        const double se = std::sqrt(var / runs);
        worst_z = std::max(worst_z, std::abs(mean - exact[static_cast<std::size_t>(i)]) / std::max(se, 1e-12));
    }

    // MAE decay across m in {50, 200, 800}: log-log slope -0.5 +/- 0.15
    const std::vector<std::int64_t> ms = {50, 200, 800};
    std::vector<double> log_m, log_mae;
    for (std::int64_t m : ms) {
        double mae = 0.0;
        const int reps = 100;
        for (int r = 0; r < reps; ++r) {
            auto g = CoalitionGame::from_table(n, table);
            auto est = sampled_shapley_permutations(g, m, 20000 + static_cast<std::uint64_t>(r) * 13 + static_cast<std::uint64_t>(m)).values;
            for (int i = 0; i < n; ++i) mae += std::abs(est[static_cast<std::size_t>(i)] - exact[static_cast<std::size_t>(i)]);
        }
        mae /= reps * n;
        log_m.push_back(std::log(static_cast<double>(m)));
        log_mae.push_back(std::log(mae));
    }
    const double mx = std::accumulate(log_m.begin(), log_m.end(), 0.0) / 3.0;
    const double my = std::accumulate(log_mae.begin(), log_mae.end(), 0.0) / 3.0;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 3; ++i) {
        num += (log_m[static_cast<std::size_t>(i)] - mx) * (log_mae[static_cast<std::size_t>(i)] - my);
        den += (log_m[static_cast<std::size_t>(i)] - mx) * (log_m[static_cast<std::size_t>(i)] - mx);
    }
    const double slope = num / den;

    char buf[192];
    std::snprintf(buf, sizeof(buf), "worst |z| %.2f (<=3), MAE log-log slope %.3f (in [-0.65,-0.35])", worst_z, slope);
    detail = buf;
    return worst_z <= 3.0 && slope >= -0.65 && slope <= -0.35 ? Outcome::pass : Outcome::fail;
}

// ---------------------------------------------------------------------- C3

double dirichlet_log_pdf(const std::vector<double>& alpha, const std::vector<double>& s) {
    double lp = 0.0, asum = 0.0;
    for (double a : alpha) {
        lp -= std::lgamma(a);
        asum += a;
    }
    lp += std::lgamma(asum);
    for (std::size_t i = 0; i < s.size(); ++i) lp += (alpha[i] - 1.0) * std::log(s[i]);
    return lp;
}

Outcome criterion3(const Options&, std::string& detail) {
    std::mt19937_64 rng(777);
    // concentrations below ~0.3 make the log-ratio heavy-tailed enough that
    // the 1e6-sample estimator's own noise exceeds the 1e-2 tolerance; the
    // small-alpha regime of the formula is covered by the exact identity and
    // gradient checks instead
    std::uniform_real_distribution<double> upar(0.3, 3.0);
    std::uniform_int_distribution<int> udim(2, 5);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int d = udim(rng);
        std::vector<double> phi(static_cast<std::size_t>(d));
        for (auto& p : phi) p = upar(rng);
        const double alpha0 = upar(rng);
        const double closed = kl_dirichlet(phi, alpha0);

        std::vector<std::gamma_distribution<double>> gammas;
        for (double p : phi) gammas.emplace_back(p, 1.0);
        const std::vector<double> prior(static_cast<std::size_t>(d), alpha0);
        double mc = 0.0;
        std::vector<double> s(static_cast<std::size_t>(d));
        const std::int64_t samples = 1000000;
        for (std::int64_t t = 0; t < samples; ++t) {
            double sum = 0.0;
            for (int i = 0; i < d; ++i) {
                s[static_cast<std::size_t>(i)] = gammas[static_cast<std::size_t>(i)](rng);
                sum += s[static_cast<std::size_t>(i)];
            }
            for (auto& v : s) v = std::max(v / sum, 1e-300);
            mc += dirichlet_log_pdf(phi, s) - dirichlet_log_pdf(prior, s);
        }
        mc /= static_cast<double>(samples);
        worst = std::max(worst, std::abs(closed - mc));
    }
    double ident = 0.0;
    for (double a : {0.1, 0.5, 1.0, 2.5}) {
        std::vector<double> phi(4, a);
        ident = std::max(ident, std::abs(kl_dirichlet(phi, a)));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "closed-form vs MC gap %.2e (<=1e-2), identity KL %.2e (<=1e-10)", worst, ident);
    detail = buf;
    return worst <= 1e-2 && ident <= 1e-10 ? Outcome::pass : Outcome::fail;
}

// ---------------------------------------------------------------------- C4

Outcome criterion4(const Options&, std::string& detail) {
    Network<double> net;
    net.input_shape = {2, 7, 7};
    net.num_classes = 4;
    using L = Layer<double>;
    net.layers.push_back(L::conv(2, 3, 3));
    net.layers.push_back(L::maxpool(2));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::flatten_());
    net.layers.push_back(L::dense(12, 6));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::dense(6, 4));
    net.maskable_layers = {0, 4};
    init_params(net, 1234);
    std::mt19937_64 rng(4321);
    std::normal_distribution<double> bias(0.0, 0.1);
    for (auto& l : net.layers)
        if (l.has_params())
            for (std::int64_t i = 0; i < l.bias.numel(); ++i) l.bias[i] = bias(rng);

    Tensor<double> batch({3, 2, 7, 7});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : batch.data) v = u(rng);
    std::vector<int> labels = {1, 3, 0};

    const double h = 1e-5;
    auto loss_at = [&]() {
        auto logits = forward(net, batch);
        return softmax_cross_entropy(logits, labels);
    };
    auto g = backward(net, batch, labels);
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
                const double up = loss_at();
                p[i] = keep - h;
                const double dn = loss_at();
                p[i] = keep;
                const double fd = (up - dn) / (2 * h);
                worst = std::max(worst, std::abs(a[i] - fd) / std::max({1e-6, std::abs(a[i]), std::abs(fd)}));
            }
        }
    }

    // switch path: d(scale*CE + KL)/d(rho) against finite differences, with
    // the switch on the conv layer so the broadcast path is covered too
    double worst_switch = 0.0;
    for (int layer_index : {0, 4}) {
        const int d = net.units_at(layer_index);
        std::vector<double> rho(static_cast<std::size_t>(d));
        for (auto& r : rho) r = u(rng);
        const double alpha0 = 0.3, scale = 9.0;
        auto step = switch_loss_grad(net, batch, labels, layer_index, rho, alpha0, scale);
        for (int j = 0; j < d; ++j) {
            auto up = rho, dn = rho;
            up[static_cast<std::size_t>(j)] += h;
            dn[static_cast<std::size_t>(j)] -= h;
            const double lu = switch_loss_grad(net, batch, labels, layer_index, up, alpha0, scale).loss;
            const double ld = switch_loss_grad(net, batch, labels, layer_index, dn, alpha0, scale).loss;
            const double fd = (lu - ld) / (2 * h);
            worst_switch = std::max(worst_switch, std::abs(step.grad_rho[static_cast<std::size_t>(j)] - fd) /
                                                      std::max({1e-6, std::abs(fd), std::abs(step.grad_rho[static_cast<std::size_t>(j)])}));
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "params rel err %.2e, switch-path rel err %.2e (both <=1e-4)", worst, worst_switch);
    detail = buf;
    return worst <= 1e-4 && worst_switch <= 1e-4 ? Outcome::pass : Outcome::fail;
}

// ---------------------------------------------------------------------- C5

Outcome criterion5(const Options& opt, std::string& detail) {
    set_worker_count(opt.workers);
    int switch_hits = 0, shapley_hits = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        PlantedTask task = make_planted_mlp(10, 10, seed);
        auto data = make_planted_data(2000, 10, seed * 31 + 7);

        SwitchTrainOptions opts;
        opts.epochs = 40;
        opts.batch_size = 64;
        opts.lr = 0.02;
        opts.alpha0 = 0.1;
        opts.seed = seed;
        auto sw = train_switch_layer(task.net, task.hidden_layer_index, data, opts);
        auto order = rank_from_switch(sw.posterior);
        std::set<int> top2{order[0], order[1]};
        if (top2 == std::set<int>{0, 1}) ++switch_hits;

        auto eval_data = make_planted_data(1000, 10, seed * 77 + 3);
        auto eval = std::make_shared<LayerGameEvaluator>(task.net, task.hidden_layer_index, eval_data);
        auto game = make_fast_layer_game(eval, task.hidden_layer_index);
        auto sv = exact_shapley_subsets(game);
        auto sv_order = rank_players(sv.values);
        std::set<int> sv_top2{sv_order[0], sv_order[1]};
        if (sv_top2 == std::set<int>{0, 1}) ++shapley_hits;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "switch top-2 recovery %d/10, shapley top-2 recovery %d/10 (both >=9)", switch_hits,
                  shapley_hits);
    detail = buf;
    return switch_hits >= 9 && shapley_hits >= 9 ? Outcome::pass : Outcome::fail;
}

// ------------------------------------------------------------------ C6 / C7

struct MnistData {
    Dataset train, test;
};

bool mnist_available(const std::string& dir) {
    const auto p = idx_paths(dir);
    return fs::exists(p.train_images) && fs::exists(p.train_labels) && fs::exists(p.test_images) &&
           fs::exists(p.test_labels);
}

MnistData load_mnist(const std::string& dir) {
    const auto p = idx_paths(dir);
    MnistData d;
    d.train = load_idx(p.train_images, p.train_labels);
    d.test = load_idx(p.test_images, p.test_labels);
    return d;
}

json load_or_null(const std::string& path) {
    std::ifstream f(path);
    if (!f) return json(nullptr);
    json j;
    try {
        f >> j;
    } catch (const json::exception&) {
        return json(nullptr);
    }
    return j;
}

void store_json(const std::string& path, const json& j) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path);
    f << j.dump(2) << "\n";
}

NetworkF train_or_load(const Options& opt, const MnistData& data, std::uint64_t seed, double* test_acc) {
    const std::string ckpt = opt.out_dir + "/c6_seed" + std::to_string(seed) + ".nrckpt";
    if (fs::exists(ckpt)) {
        json meta;
        auto net = load_checkpoint(ckpt, &meta);
        *test_acc = meta.at("test_acc").get<double>();
        std::printf("  [seed %llu] reusing checkpoint (test acc %.4f)\n", static_cast<unsigned long long>(seed),
                    *test_acc);
        return net;
    }
    Timer t;
    auto split = split_indices(data.train, 0.1, seed);
    ImageSource train_src(data.train, split.train);
    ImageSource val_src(data.train, split.val);
    ImageSource test_src(data.test);
    auto net = build_lenet({10, 20, 100, 25}, seed);
    TrainSchedule sched;
    sched.epochs = 30;
    sched.batch_size = 128;
    sched.lr0 = 0.1;
    sched.seed = seed;
    auto r = train(net, train_src, val_src, sched);
    *test_acc = evaluate_accuracy(r.net, test_src);
    json meta;
    meta["test_acc"] = *test_acc;
    meta["best_val_acc"] = r.best_val_acc;
    meta["seed"] = seed;
    fs::create_directories(opt.out_dir);
    save_checkpoint(r.net, ckpt, meta);
    std::printf("  [seed %llu] trained: val %.4f test %.4f (%.0fs)\n", static_cast<unsigned long long>(seed),
                r.best_val_acc, *test_acc, t.s());
    return r.net;
}

ImageSource nu_source(const Options& opt, const Dataset& train, std::uint64_t seed) {
    auto split = split_indices(train, 0.1, seed);
    auto idx = split.val;
    if (opt.nu_limit > 0 && opt.nu_limit < static_cast<std::int64_t>(idx.size())) {
        std::vector<std::vector<std::int64_t>> by_class(10);
        for (auto i : idx) by_class[static_cast<std::size_t>(train.labels[static_cast<std::size_t>(i)])].push_back(i);
        std::vector<std::int64_t> out;
        for (std::size_t round = 0; static_cast<std::int64_t>(out.size()) < opt.nu_limit; ++round)
            for (int c = 0; c < 10 && static_cast<std::int64_t>(out.size()) < opt.nu_limit; ++c)
                if (round < by_class[static_cast<std::size_t>(c)].size())
                    out.push_back(by_class[static_cast<std::size_t>(c)][round]);
        std::sort(out.begin(), out.end());
        idx = std::move(out);
    }
    return ImageSource(train, idx);
}

std::vector<int> shapley_ranking_cached(const Options& opt, const NetworkF& net, const ImageSource& nu,
                                        std::uint64_t seed, const std::string& lname, bool sampled) {
    const std::string path = opt.out_dir + "/c6_s" + std::to_string(seed) + "_sh_" + lname + ".json";
    json cached = load_or_null(path);
    if (!cached.is_null()) return cached.at("ranking").get<std::vector<int>>();
    Timer t;
    const int li = resolve_layer(net, lname);
    auto eval = std::make_shared<LayerGameEvaluator>(net, li, nu);
    auto game = make_fast_layer_game(eval, li);
    ShapleyResult r = sampled ? sampled_marginals(game, 2000, seed) : exact_shapley_subsets(game);
    json j;
    j["layer"] = li;
    j["method"] = shapley_method_name(r.method);
    j["values"] = r.values;
    j["ranking"] = rank_players(r.values);
    j["eval_count"] = r.eval_count;
    j["wall_s"] = t.s();
    store_json(path, j);
    std::printf("  [seed %llu] shapley %s: %lld evals in %.0fs\n", static_cast<unsigned long long>(seed),
                lname.c_str(), static_cast<long long>(r.eval_count), t.s());
    return j["ranking"].get<std::vector<int>>();
}

std::vector<int> switch_ranking_cached(const Options& opt, const NetworkF& net, const Dataset& train,
                                       std::uint64_t seed, const std::string& lname) {
    const std::string path = opt.out_dir + "/c6_s" + std::to_string(seed) + "_is_" + lname + ".json";
    json cached = load_or_null(path);
    if (!cached.is_null()) return cached.at("ranking").get<std::vector<int>>();
    Timer t;
    const int li = resolve_layer(net, lname);
    auto split = split_indices(train, 0.1, seed);
    ImageSource train_src(train, split.train);
    SwitchTrainOptions opts;
    opts.epochs = 10;  // fast mode; a few epochs suffice to separate the ranking
    opts.batch_size = 128;
    opts.alpha0 = 0.1;
    opts.lr = 0.01;
    opts.seed = seed;
    auto r = train_switch_layer(net, li, train_src, opts);
    json j;
    j["layer"] = li;
    j["phi"] = r.posterior.phi;
    j["ranking"] = rank_from_switch(r.posterior);
    j["elbo_history"] = r.elbo_history;
    j["wall_s"] = t.s();
    store_json(path, j);
    std::printf("  [seed %llu] switch %s trained in %.0fs\n", static_cast<unsigned long long>(seed), lname.c_str(),
                t.s());
    return j["ranking"].get<std::vector<int>>();
}

Outcome criterion6(const Options& opt, std::string& detail) {
    if (opt.data_dir.empty() || !mnist_available(opt.data_dir)) {
        detail = "MNIST IDX files not found (set --data-dir or NR_MNIST_DIR)";
        return Outcome::skip;
    }
    set_worker_count(opt.workers);
    auto data = load_mnist(opt.data_dir);

    int conv2_hits = 0, fc2_hits = 0;
    double first_acc = 0.0;
    std::string accs;
    for (int s = 0; s < opt.seeds; ++s) {
        const std::uint64_t seed = static_cast<std::uint64_t>(s + 1);
        double test_acc = 0.0;
        auto net = train_or_load(opt, data, seed, &test_acc);
        if (s == 0) first_acc = test_acc;
        char ab[32];
        std::snprintf(ab, sizeof(ab), "%s%.4f", s ? "," : "", test_acc);
        accs += ab;

        auto nu = nu_source(opt, data.train, seed);
        auto sh_conv1 = shapley_ranking_cached(opt, net, nu, seed, "conv1", false);
        auto sh_conv2 = shapley_ranking_cached(opt, net, nu, seed, "conv2", false);
        auto sh_fc2 = shapley_ranking_cached(opt, net, nu, seed, "fc2", false);
        auto sh_fc1 = shapley_ranking_cached(opt, net, nu, seed, "fc1", true);
        (void)sh_conv1;
        (void)sh_fc1;

        auto is_conv1 = switch_ranking_cached(opt, net, data.train, seed, "conv1");
        auto is_conv2 = switch_ranking_cached(opt, net, data.train, seed, "conv2");
        auto is_fc1 = switch_ranking_cached(opt, net, data.train, seed, "fc1");
        auto is_fc2 = switch_ranking_cached(opt, net, data.train, seed, "fc2");
        (void)is_conv1;
        (void)is_fc1;

        const int ov_conv2 = top_k_overlap(sh_conv2, is_conv2, 5);
        const int ov_fc2 = top_k_overlap(sh_fc2, is_fc2, 5);
        if (ov_conv2 >= 3) ++conv2_hits;
        if (ov_fc2 >= 3) ++fc2_hits;
        std::printf("  [seed %llu] overlap conv2 %d/5 (baseline 1.25), fc2 %d/5 (baseline 1.0)\n",
                    static_cast<unsigned long long>(seed), ov_conv2, ov_fc2);
    }

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "test acc [%s] (first %.4f >= 0.985), conv2 overlap>=3 in %d/%d, fc2 overlap>=3 in %d/%d (need >=4/5)",
                  accs.c_str(), first_acc, conv2_hits, opt.seeds, fc2_hits, opt.seeds);
    detail = buf;
    const int need = std::min(4, opt.seeds);
    return first_acc >= 0.985 && conv2_hits >= need && fc2_hits >= need ? Outcome::pass : Outcome::fail;
}

Outcome criterion7(const Options& opt, std::string& detail) {
    // parameter and FLOP anchors are pure arithmetic on the pruned shape
    auto shape_net = build_lenet({5, 7, 45, 20}, 0);
    const std::int64_t params = count_params(shape_net);
    const std::int64_t flops = count_flops(shape_net);
    const bool params_ok = params >= 0.85 * 17000 && params <= 1.15 * 17000;
    const bool flops_ok = flops >= 0.75 * 137000 && flops <= 1.25 * 137000;

    if (opt.data_dir.empty() || !mnist_available(opt.data_dir)) {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "params %lld vs 17000+/-15%% -> %s; flops %lld vs 137000+/-25%% -> %s; retrain error: SKIP (no data)",
                      static_cast<long long>(params), params_ok ? "ok" : "FAIL", static_cast<long long>(flops),
                      flops_ok ? "ok" : "FAIL");
        detail = buf;
        return params_ok && flops_ok ? Outcome::skip : Outcome::fail;
    }

    set_worker_count(opt.workers);
    auto data = load_mnist(opt.data_dir);
    const std::uint64_t seed = 1;
    double base_acc = 0.0;
    auto net = train_or_load(opt, data, seed, &base_acc);

    // prune by the importance-switch ranking
    PruneSpec spec;
    spec.ranking_method = "switch";
    const std::array<int, 4> keeps = {5, 7, 45, 20};
    for (std::size_t i = 0; i < net.maskable_layers.size(); ++i) {
        const int li = net.maskable_layers[i];
        const std::string lname = maskable_layer_name(net, li);
        spec.rankings[li] = switch_ranking_cached(opt, net, data.train, seed, lname);
        spec.keep_counts[li] = keeps[i];
    }
    auto pruned = prune(net, spec);

    const std::string result_path = opt.out_dir + "/c7_retrain.json";
    json cached = load_or_null(result_path);
    double err_after;
    if (!cached.is_null()) {
        err_after = cached.at("test_error_after").get<double>();
    } else {
        Timer t;
        auto split = split_indices(data.train, 0.1, seed);
        ImageSource train_src(data.train, split.train);
        ImageSource val_src(data.train, split.val);
        ImageSource test_src(data.test);
        TrainSchedule sched;
        sched.epochs = 30;
        sched.batch_size = 128;
        sched.lr0 = 0.1;
        sched.seed = seed;
        const double err_before = 1.0 - evaluate_accuracy(pruned, test_src);
        auto r = train(pruned, train_src, val_src, sched);
        err_after = 1.0 - evaluate_accuracy(r.net, test_src);
        json j;
        j["architecture"] = arch_string(pruned);
        j["test_error_before"] = err_before;
        j["test_error_after"] = err_after;
        j["wall_s"] = t.s();
        store_json(result_path, j);
        save_checkpoint(r.net, opt.out_dir + "/c7_pruned.nrckpt", j);
        std::printf("  [c7] retrained 5-7-45-20: %.2f%% -> %.2f%% error (%.0fs)\n", 100 * err_before, 100 * err_after,
                    t.s());
    }

    const bool err_ok = err_after <= 0.015;
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "retrain error %.2f%% (<=1.5%%) -> %s; params %lld vs 17000+/-15%% -> %s; flops %lld vs "
                  "137000+/-25%% -> %s",
                  100 * err_after, err_ok ? "ok" : "FAIL", static_cast<long long>(params), params_ok ? "ok" : "FAIL",
                  static_cast<long long>(flops), flops_ok ? "ok" : "FAIL");
    detail = buf;
    return err_ok && params_ok && flops_ok ? Outcome::pass : Outcome::fail;
}

// ---------------------------------------------------------------------- C8

Outcome criterion8(const Options&, std::string& detail) {
    auto net = build_lenet({10, 20, 100, 25}, 31337);
    PruneSpec spec;
    std::mt19937_64 rng(4);
    const std::map<int, int> keeps = {{0, 5}, {3, 7}, {7, 45}, {9, 20}};
    for (auto [li, keep] : keeps) {
        std::vector<int> order(static_cast<std::size_t>(net.units_at(li)));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        spec.rankings[li] = order;
        spec.keep_counts[li] = keep;
    }
    auto pruned = prune(net, spec);

    std::vector<NeuronMask> masks;
    for (auto [li, keep] : keeps) {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(net.units_at(li)), 0);
        for (int u : kept_units(spec, li, net.units_at(li))) bits[static_cast<std::size_t>(u)] = 1;
        masks.push_back(NeuronMask{li, bits});
    }

    Tensor<float> inputs({100, 1, 28, 28});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : inputs.data) v = static_cast<float>(u(rng));
    auto masked = forward(net, inputs, masks);
    auto sliced = forward(pruned, inputs);
    float worst = 0.0f;
    for (std::int64_t i = 0; i < masked.numel(); ++i) worst = std::max(worst, std::abs(masked[i] - sliced[i]));

    char buf[128];
    std::snprintf(buf, sizeof(buf), "max |logit diff| %.3g over 100 random inputs (<=1e-6, exact)", worst);
    detail = buf;
    return worst <= 1e-6f ? Outcome::pass : Outcome::fail;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    if (const char* env = std::getenv("NR_MNIST_DIR")) opt.data_dir = env;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) {
                std::fprintf(stderr, "missing value for %s\n", arg.c_str());
                std::exit(2);
            }
            return argv[++i];
        };
        if (arg == "--criteria") {
            std::stringstream ss(next());
            std::string tok;
            while (std::getline(ss, tok, ',')) opt.criteria.push_back(std::stoi(tok));
        } else if (arg == "--data-dir")
            opt.data_dir = next();
        else if (arg == "--out")
            opt.out_dir = next();
        else if (arg == "--workers")
            opt.workers = std::stoi(next());
        else if (arg == "--seeds")
            opt.seeds = std::stoi(next());
        else if (arg == "--nu-limit")
            opt.nu_limit = std::stoll(next());
        else {
            std::fprintf(stderr, "unknown argument %s\n", arg.c_str());
            return 2;
        }
    }
    if (opt.criteria.empty()) opt.criteria = {1, 2, 3, 4, 5, 6, 7, 8};

    using Fn = std::function<Outcome(const Options&, std::string&)>;
    const std::map<int, std::pair<const char*, Fn>> table = {
        {1, {"shapley correctness (exact forms + axioms)", criterion1}},
        {2, {"sampling unbiasedness + error decay", criterion2}},
        {3, {"dirichlet KL closed form vs Monte Carlo", criterion3}},
        {4, {"gradient checks (layers + switch path)", criterion4}},
        {5, {"planted-signal recovery by both methods", criterion5}},
        {6, {"end-to-end MNIST ranking agreement", criterion6}},
        {7, {"compression to 5-7-45-20 with retraining", criterion7}},
        {8, {"prune/mask forward equivalence", criterion8}},
    };

    int failures = 0, skips = 0;
    for (int c : opt.criteria) {
        auto it = table.find(c);
        if (it == table.end()) {
            std::fprintf(stderr, "unknown criterion %d\n", c);
            return 2;
        }
        Timer t;
        std::string detail;
        Outcome o = Outcome::fail;
        try {
            o = it->second.second(opt, detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const char* tag = o == Outcome::pass ? "PASS" : o == Outcome::fail ? "FAIL" : "SKIP";
        std::printf("C%d %s %s: %s (%.1fs)\n", c, tag, it->second.first, detail.c_str(), t.s());
        std::fflush(stdout);
        if (o == Outcome::fail) ++failures;
        if (o == Outcome::skip) ++skips;
    }
    if (failures) return 1;
    return skips ? 77 : 0;
}
