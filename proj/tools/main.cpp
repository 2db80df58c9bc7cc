// neuronrank CLI: train a small convnet, rank its units by shapley value or
// by variational importance switches, compare the rankings, prune, retrain,
// and export feature maps.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "nr/checkpoint.hpp"
#include "nr/dataset.hpp"
#include "nr/layer_game.hpp"
#include "nr/model_zoo.hpp"
#include "nr/pgm.hpp"
#include "nr/prune.hpp"
#include "nr/rank.hpp"
#include "nr/shapley.hpp"
#include "nr/switch_vi.hpp"
#include "nr/train.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
    std::string dataset = "mnist";
    std::string data_dir = "data/mnist";
    std::string arch = "10-20-100-25";
    std::uint64_t seed = 0;
    int workers = 1;
    double val_fraction = 0.1;
    int epochs = 30;
    int batch_size = 128;
    double lr = 0.1;
    std::string layer = "conv1";
    std::string method = "";
    std::int64_t samples = 2000;
    int truncation_k = 0;
    double alpha0 = 0.1;
    int switch_epochs = 300;
    double switch_lr = 0.01;
    bool fast = false;
    std::int64_t nu_limit = 0;  // 0 = whole validation split
    int cache_max_players = 20;
    std::string keep = "";
    int retrain_epochs = 0;
    std::string out_dir = "out";

    json to_json() const {
        json j;
        j["dataset"] = dataset;
        j["data_dir"] = data_dir;
        j["arch"] = arch;
        j["seed"] = seed;
        j["workers"] = workers;
        j["val_fraction"] = val_fraction;
        j["epochs"] = epochs;
        j["batch_size"] = batch_size;
        j["lr"] = lr;
        j["layer"] = layer;
        j["method"] = method;
        j["samples"] = samples;
        j["k"] = truncation_k;
        j["alpha0"] = alpha0;
        j["switch_epochs"] = switch_epochs;
        j["switch_lr"] = switch_lr;
        j["fast"] = fast;
        j["nu_limit"] = nu_limit;
        j["cache_max_players"] = cache_max_players;
        j["keep"] = keep;
        j["retrain_epochs"] = retrain_epochs;
        j["out_dir"] = out_dir;
        return j;
    }
};

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw nr::InputError("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw nr::InputError("bad config JSON in " + path + ": " + e.what());
    }
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    get("dataset", cfg.dataset);
    get("data_dir", cfg.data_dir);
    get("arch", cfg.arch);
    get("seed", cfg.seed);
    get("workers", cfg.workers);
    get("val_fraction", cfg.val_fraction);
    get("epochs", cfg.epochs);
    get("batch_size", cfg.batch_size);
    get("lr", cfg.lr);
    get("layer", cfg.layer);
    get("method", cfg.method);
    get("samples", cfg.samples);
    get("k", cfg.truncation_k);
    get("alpha0", cfg.alpha0);
    get("switch_epochs", cfg.switch_epochs);
    get("switch_lr", cfg.switch_lr);
    get("fast", cfg.fast);
    get("nu_limit", cfg.nu_limit);
    get("cache_max_players", cfg.cache_max_players);
    get("keep", cfg.keep);
    get("retrain_epochs", cfg.retrain_epochs);
    get("out_dir", cfg.out_dir);
}

nr::Dataset load_train_set(const RunConfig& cfg) {
    const auto paths = nr::idx_paths(cfg.data_dir);
    if (!fs::exists(paths.train_images) || !fs::exists(paths.train_labels))
        throw nr::InputError("data directory '" + cfg.data_dir + "' is missing the expected IDX files: " +
                             paths.train_images + ", " + paths.train_labels + ", " + paths.test_images + ", " +
                             paths.test_labels);
    auto ds = nr::load_idx(paths.train_images, paths.train_labels);
    ds.name = cfg.dataset;
    return ds;
}

nr::Dataset load_test_set(const RunConfig& cfg) {
    const auto paths = nr::idx_paths(cfg.data_dir);
    if (!fs::exists(paths.test_images) || !fs::exists(paths.test_labels))
        throw nr::InputError("data directory '" + cfg.data_dir + "' is missing the expected IDX files: " +
                             paths.test_images + ", " + paths.test_labels);
    auto ds = nr::load_idx(paths.test_images, paths.test_labels);
    ds.name = cfg.dataset + "-test";
    return ds;
}

// deterministic stratified subsample of the validation indices
std::vector<std::int64_t> limit_stratified(const nr::Dataset& ds, const std::vector<std::int64_t>& idx,
                                           std::int64_t limit) {
    if (limit <= 0 || limit >= static_cast<std::int64_t>(idx.size())) return idx;
    std::vector<std::vector<std::int64_t>> by_class(10);
    for (auto i : idx) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(limit));
    for (std::size_t round = 0; static_cast<std::int64_t>(out.size()) < limit; ++round)
        for (int c = 0; c < 10 && static_cast<std::int64_t>(out.size()) < limit; ++c)
            if (round < by_class[static_cast<std::size_t>(c)].size()) out.push_back(by_class[static_cast<std::size_t>(c)][round]);
    std::sort(out.begin(), out.end());
    return out;
}

void write_json_file(const std::string& path, const json& j) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path);
    if (!f) throw nr::InputError("cannot write " + path);
    f << j.dump(2) << "\n";
}

json timing_json(double seconds) {
    json t;
    t["wall_s"] = seconds;
    return t;
}

class Stopwatch {
  public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

  private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg) {
    Stopwatch watch;
    auto full = load_train_set(cfg);
    auto test = load_test_set(cfg);
    auto split = nr::split_indices(full, cfg.val_fraction, cfg.seed);
    nr::ImageSource train_src(full, split.train);
    nr::ImageSource val_src(full, split.val);
    nr::ImageSource test_src(test);

    auto net = nr::build_lenet(nr::parse_arch(cfg.arch), cfg.seed);
    nr::TrainSchedule sched;
    sched.epochs = cfg.epochs;
    sched.batch_size = cfg.batch_size;
    sched.lr0 = cfg.lr;
    sched.seed = cfg.seed;
    auto result = nr::train(net, train_src, val_src, sched);
    const double test_acc = nr::evaluate_accuracy(result.net, test_src);

    fs::create_directories(cfg.out_dir);
    json meta;
    meta["config"] = cfg.to_json();
    meta["best_epoch"] = result.best_epoch;
    meta["best_val_acc"] = result.best_val_acc;
    meta["test_acc"] = test_acc;
    const std::string ckpt = cfg.out_dir + "/checkpoint.nrckpt";
    nr::save_checkpoint(result.net, ckpt, meta);

    json hist;
    hist["format"] = "nr-history";
    hist["version"] = 1;
    hist["config"] = cfg.to_json();
    hist["best_epoch"] = result.best_epoch;
    hist["best_val_acc"] = result.best_val_acc;
    hist["test_acc"] = test_acc;
    json epochs = json::array();
    for (const auto& e : result.history) {
        json ej;
        ej["epoch"] = e.epoch;
        ej["lr"] = e.lr;
        ej["train_loss"] = e.train_loss;
        ej["train_acc"] = e.train_acc;
        ej["val_acc"] = e.val_acc;
        epochs.push_back(std::move(ej));
    }
    hist["epochs"] = std::move(epochs);
    write_json_file(cfg.out_dir + "/history.json", hist);

    std::printf("trained %s on %s: best val %.4f (epoch %d), test %.4f, %.1fs\n", cfg.arch.c_str(),
                cfg.dataset.c_str(), result.best_val_acc, result.best_epoch, test_acc, watch.seconds());
    return 0;
}

struct LoadedCheckpoint {
    nr::NetworkF net;
    json meta;
};

LoadedCheckpoint load_ckpt(const std::string& path) {
    json meta;
    auto net = nr::load_checkpoint(path, &meta);
    return {std::move(net), std::move(meta)};
}

// validation split reconstructed from the checkpoint's recorded settings,
// overridable from the current config
nr::ImageSource nu_eval_source(const RunConfig& cfg, const nr::Dataset& full) {
    auto split = nr::split_indices(full, cfg.val_fraction, cfg.seed);
    auto idx = limit_stratified(full, split.val, cfg.nu_limit);
    return nr::ImageSource(full, idx);
}

int cmd_shapley(const RunConfig& cfg, const std::string& ckpt_path) {
    Stopwatch watch;
    auto [net, meta] = load_ckpt(ckpt_path);
    auto full = load_train_set(cfg);
    auto src = nu_eval_source(cfg, full);
    const int li = nr::resolve_layer(net, cfg.layer);
    const std::string lname = nr::maskable_layer_name(net, li);
    const int n = net.units_at(li);

    std::string method = cfg.method;
    if (method.empty()) {
        if (n > 25)
            throw nr::InputError("layer " + lname + " has " + std::to_string(n) +
                                 " units; exhaustive evaluation handles at most 25. Pass --method "
                                 "sampled_permutations, sampled_marginals, or truncated_k.");
        method = "exact_subsets";
    }
    const nr::ShapleyMethod m = nr::shapley_method_from_name(method);
    if ((m == nr::ShapleyMethod::exact_subsets || m == nr::ShapleyMethod::exact_permutations ||
         m == nr::ShapleyMethod::truncated_k) &&
        n > 25)
        throw nr::InputError("exhaustive methods handle at most 25 units; layer has " + std::to_string(n));

    auto eval = std::make_shared<nr::LayerGameEvaluator>(net, li, src);
    auto game = nr::make_fast_layer_game(eval, li);

    json cache_meta;
    cache_meta["layer"] = li;
    cache_meta["net"] = nr::param_fingerprint(net);
    cache_meta["eval_set_size"] = src.size();
    const std::string cache_path = cfg.out_dir + "/payoff_cache_" + lname + ".json";
    const bool persist = n <= cfg.cache_max_players;
    if (persist) {
        game.set_cache_bulk_results(true);
        game.cache().load(cache_path, cache_meta.dump());
    }

    nr::ShapleyResult result;
    switch (m) {
        case nr::ShapleyMethod::exact_subsets: {
            // a fully warmed cache short-circuits the power-set walk
            if (game.cache().size() == (std::size_t(1) << n)) {
                game.set_bulk_fn(nullptr);
            }
            result = nr::exact_shapley_subsets(game);
            break;
        }
        case nr::ShapleyMethod::exact_permutations:
            result = nr::exact_shapley_permutations(game);
            break;
        case nr::ShapleyMethod::truncated_k:
            if (cfg.truncation_k < 1) throw nr::InputError("truncated_k needs --k >= 1");
            result = nr::truncated_shapley(game, cfg.truncation_k);
            break;
        case nr::ShapleyMethod::sampled_permutations:
            result = nr::sampled_shapley_permutations(game, cfg.samples, cfg.seed);
            break;
        case nr::ShapleyMethod::sampled_marginals:
            result = nr::sampled_marginals(game, cfg.samples, cfg.seed);
            break;
    }
    if (persist) game.cache().save(cache_path, cache_meta.dump());

    json out;
    out["format"] = "nr-shapley";
    out["version"] = 1;
    out["config"] = cfg.to_json();
    out["checkpoint"] = ckpt_path;
    out["net_fingerprint"] = nr::param_fingerprint(net);
    out["layer"] = li;
    out["layer_name"] = lname;
    out["n_players"] = n;
    out["method"] = nr::shapley_method_name(result.method);
    out["samples"] = result.samples;
    out["k"] = result.truncation_k;
    out["seed"] = result.seed;
    out["values"] = result.values;
    if (!result.std_error.empty()) {
        json se = json::array();
        for (double v : result.std_error) se.push_back(std::isnan(v) ? json(nullptr) : json(v));
        out["std_error"] = std::move(se);
    }
    if (!result.draws_per_player.empty()) out["draws_per_player"] = result.draws_per_player;
    out["ranking"] = nr::rank_players(result.values);
    out["payoff_grand"] = result.payoff_grand;
    out["payoff_empty"] = result.payoff_empty;
    out["eval_count"] = result.eval_count;
    out["nu_eval_size"] = src.size();
    out["timing"] = timing_json(watch.seconds());
    const std::string path = cfg.out_dir + "/shapley_" + lname + ".json";
    write_json_file(path, out);
    std::printf("shapley[%s] %s: %lld evaluations, grand %.4f, empty %.4f -> %s\n", lname.c_str(), method.c_str(),
                static_cast<long long>(result.eval_count), result.payoff_grand, result.payoff_empty, path.c_str());
    return 0;
}

int cmd_switch(const RunConfig& cfg, const std::string& ckpt_path) {
    auto [net, meta] = load_ckpt(ckpt_path);
    auto full = load_train_set(cfg);
    auto split = nr::split_indices(full, cfg.val_fraction, cfg.seed);
    nr::ImageSource train_src(full, split.train);

    nr::SwitchTrainOptions opts;
    opts.epochs = cfg.fast ? 10 : cfg.switch_epochs;
    opts.batch_size = cfg.batch_size;
    opts.alpha0 = cfg.alpha0;
    opts.lr = cfg.switch_lr;
    opts.seed = cfg.seed;

    // sequentially from the input side to the last hidden layer
    for (int li : net.maskable_layers) {
        Stopwatch watch;
        const std::string lname = nr::maskable_layer_name(net, li);
        auto r = nr::train_switch_layer(net, li, train_src, opts);
        json out;
        out["format"] = "nr-switch";
        out["version"] = 1;
        out["config"] = cfg.to_json();
        out["checkpoint"] = ckpt_path;
        out["net_fingerprint"] = nr::param_fingerprint(net);
        out["layer"] = li;
        out["layer_name"] = lname;
        out["alpha0"] = opts.alpha0;
        out["epochs"] = opts.epochs;
        out["phi"] = r.posterior.phi;
        out["posterior_mean"] = nr::posterior_mean(r.posterior.phi);
        out["ranking"] = nr::rank_from_switch(r.posterior);
        out["elbo_history"] = r.elbo_history;
        out["timing"] = timing_json(watch.seconds());
        const std::string path = cfg.out_dir + "/switch_" + lname + ".json";
        write_json_file(path, out);
        std::printf("switch[%s]: %d epochs, elbo %.1f -> %s\n", lname.c_str(), opts.epochs,
                    r.elbo_history.empty() ? 0.0 : r.elbo_history.back(), path.c_str());
    }
    return 0;
}

std::vector<int> ranking_from_file(const std::string& path, std::string* method_out = nullptr,
                                   int* layer_out = nullptr) {
    std::ifstream f(path);
    if (!f) throw nr::InputError("cannot open ranking file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw nr::InputError(path + ": bad JSON: " + e.what());
    }
    const std::string format = j.value("format", "");
    if (format != "nr-shapley" && format != "nr-switch")
        throw nr::InputError(path + ": expected an nr-shapley or nr-switch result file");
    if (method_out) *method_out = format == "nr-shapley" ? "shapley:" + j.value("method", "?") : "switch";
    if (layer_out) *layer_out = j.value("layer", -1);
    return j.at("ranking").get<std::vector<int>>();
}

int cmd_compare(const RunConfig& cfg, const std::string& a_path, const std::string& b_path, int k) {
    std::string ma, mb;
    int la = -1, lb = -1;
    auto order_a = ranking_from_file(a_path, &ma, &la);
    auto order_b = ranking_from_file(b_path, &mb, &lb);
    if (la != lb) throw nr::InputError("ranking files describe different layers");
    const int n = static_cast<int>(order_a.size());
    const int kk = k > 0 ? k : nr::default_top_k(n);
    std::vector<int> ks{kk};
    if (kk != n) ks.push_back(n);
    auto report = nr::make_ranking_report(order_a, order_b, ks, ma, mb, la, "layer" + std::to_string(la));

    json out;
    out["format"] = "nr-ranking-report";
    out["version"] = 1;
    out["config"] = cfg.to_json();
    out["layer"] = la;
    out["method_a"] = ma;
    out["method_b"] = mb;
    out["order_a"] = order_a;
    out["order_b"] = order_b;
    out["kendall_tau"] = report.rank_correlation;
    json per_k = json::object();
    for (int kv : ks) {
        json e;
        e["overlap"] = report.top_k_overlaps.at(kv);
        e["random_baseline"] = report.random_baselines.at(kv);
        e["tail_probability"] = report.significance.at(kv);
        per_k[std::to_string(kv)] = std::move(e);
    }
    out["top_k"] = std::move(per_k);
    const std::string path = cfg.out_dir + "/compare_layer" + std::to_string(la) + ".json";
    write_json_file(path, out);
    std::ofstream md(cfg.out_dir + "/compare_layer" + std::to_string(la) + ".md");
    md << nr::ranking_report_markdown(report, kk);
    std::printf("compare layer %d: top-%d overlap %d (baseline %.2f), tau %.3f -> %s\n", la, kk,
                report.top_k_overlaps.at(kk), report.random_baselines.at(kk), report.rank_correlation, path.c_str());
    return 0;
}

int cmd_prune(const RunConfig& cfg, const std::string& ckpt_path, const std::vector<std::string>& ranking_args) {
    Stopwatch watch;
    auto [net, meta] = load_ckpt(ckpt_path);

    std::vector<int> keeps;
    {
        std::string tok;
        std::stringstream ss(cfg.keep);
        while (std::getline(ss, tok, ','))
            try {
                keeps.push_back(std::stoi(tok));
            } catch (const std::exception&) {
                throw nr::InputError("bad --keep value '" + cfg.keep + "' (want e.g. 5,7,45,20)");
            }
    }
    if (keeps.size() != net.maskable_layers.size())
        throw nr::InputError("--keep needs one count per maskable layer (" +
                             std::to_string(net.maskable_layers.size()) + ")");

    nr::PruneSpec spec;
    for (const auto& arg : ranking_args) {
        const auto eq = arg.find('=');
        if (eq == std::string::npos) throw nr::InputError("--ranking wants layer=file, got '" + arg + "'");
        const int li = nr::resolve_layer(net, arg.substr(0, eq));
        int file_layer = -1;
        std::string method;
        spec.rankings[li] = ranking_from_file(arg.substr(eq + 1), &method, &file_layer);
        if (file_layer != li)
            throw nr::InputError("ranking file " + arg.substr(eq + 1) + " is for layer " + std::to_string(file_layer) +
                                 ", not " + std::to_string(li));
        spec.ranking_method = method;
    }
    for (std::size_t i = 0; i < keeps.size(); ++i) {
        const int li = net.maskable_layers[i];
        if (keeps[i] < net.units_at(li)) spec.keep_counts[li] = keeps[i];
    }

    auto pruned = nr::prune(net, spec);

    nr::CompressionReport report;
    report.architecture = nr::arch_string(pruned);
    report.param_count = nr::count_params(pruned);
    report.flop_count = nr::count_flops(pruned);
    report.param_convention = nr::kParamConvention;
    report.flop_convention = nr::kFlopConvention;
    report.ranking_method = spec.ranking_method;
    report.retrain_epochs = cfg.retrain_epochs;

    auto test = load_test_set(cfg);
    nr::ImageSource test_src(test);
    report.test_error_before = 1.0 - nr::evaluate_accuracy(pruned, test_src);

    nr::NetworkF final_net = pruned;
    if (cfg.retrain_epochs > 0) {
        auto full = load_train_set(cfg);
        auto split = nr::split_indices(full, cfg.val_fraction, cfg.seed);
        nr::ImageSource train_src(full, split.train);
        nr::ImageSource val_src(full, split.val);
        nr::TrainSchedule sched;
        sched.epochs = cfg.retrain_epochs;
        sched.batch_size = cfg.batch_size;
        sched.lr0 = cfg.lr;
        sched.seed = cfg.seed;
        auto r = nr::train(pruned, train_src, val_src, sched);
        final_net = std::move(r.net);
        report.test_error_after = 1.0 - nr::evaluate_accuracy(final_net, test_src);
    }

    fs::create_directories(cfg.out_dir);
    json pmeta;
    pmeta["config"] = cfg.to_json();
    pmeta["pruned_from"] = ckpt_path;
    pmeta["ranking_method"] = spec.ranking_method;
    nr::save_checkpoint(final_net, cfg.out_dir + "/pruned.nrckpt", pmeta);

    json out;
    out["format"] = "nr-compression";
    out["version"] = 1;
    out["config"] = cfg.to_json();
    out["architecture"] = report.architecture;
    out["param_count"] = report.param_count;
    out["param_convention"] = report.param_convention;
    out["flop_count"] = report.flop_count;
    out["flop_convention"] = report.flop_convention;
    out["test_error_before"] = report.test_error_before;
    out["test_error_after"] = report.test_error_after < 0 ? json(nullptr) : json(report.test_error_after);
    out["retrain_epochs"] = report.retrain_epochs;
    out["ranking_method"] = report.ranking_method;
    out["timing"] = timing_json(watch.seconds());
    write_json_file(cfg.out_dir + "/compression_report.json", out);
    std::ofstream md(cfg.out_dir + "/compression_report.md");
    md << nr::compression_report_markdown(report);

    std::string after;
    if (report.test_error_after >= 0) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), ", after retrain %.2f%%", 100.0 * report.test_error_after);
        after = buf;
    }
    std::printf("pruned to %s: %lld params, %lld flops, error before %.2f%%%s\n", report.architecture.c_str(),
                static_cast<long long>(report.param_count), static_cast<long long>(report.flop_count),
                100.0 * report.test_error_before, after.c_str());
    return 0;
}

int cmd_export_maps(const RunConfig& cfg, const std::string& ckpt_path, const std::string& ranking_path,
                    const std::string& inputs) {
    auto [net, meta] = load_ckpt(ckpt_path);
    const int li = nr::resolve_layer(net, cfg.layer);
    std::vector<int> ranking;
    if (ranking_path.empty()) {
        ranking.resize(static_cast<std::size_t>(net.units_at(li)));
        std::iota(ranking.begin(), ranking.end(), 0);
    } else {
        ranking = ranking_from_file(ranking_path);
    }
    auto test = load_test_set(cfg);
    nr::ImageSource src(test);
    std::vector<std::int64_t> idx;
    std::stringstream ss(inputs);
    std::string tok;
    while (std::getline(ss, tok, ',')) idx.push_back(std::stoll(tok));
    if (idx.empty()) throw nr::InputError("--inputs needs at least one test-set index");
    auto files = nr::export_feature_maps(net, src, idx, li, ranking, cfg.out_dir + "/maps_" +
                                                                         nr::maskable_layer_name(net, li));
    std::printf("wrote %zu feature maps\n", files.size());
    return 0;
}

int cmd_make_synth(const RunConfig& cfg, std::int64_t train_count, std::int64_t test_count) {
    fs::create_directories(cfg.data_dir);
    const auto paths = nr::idx_paths(cfg.data_dir);
    auto train = nr::make_synthetic_digits(train_count, cfg.seed, "synth-train");
    auto test = nr::make_synthetic_digits(test_count, cfg.seed + 1, "synth-test");
    nr::write_idx(train, paths.train_images, paths.train_labels);
    nr::write_idx(test, paths.test_images, paths.test_labels);
    std::printf("wrote synthetic dataset (%lld train, %lld test) under %s\n", static_cast<long long>(train_count),
                static_cast<long long>(test_count), cfg.data_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neuron ranking by shapley values and importance switches"};
    app.require_subcommand(1);

    RunConfig cfg;
    // config file first, flags override
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") {
            try {
                apply_config_file(cfg, argv[i + 1]);
            } catch (const nr::Error& e) {
                std::fprintf(stderr, "error: %s\n", e.what());
                return 2;
            }
        }

    std::string config_path, ckpt_path, a_path, b_path, ranking_path, inputs = "0";
    std::vector<std::string> ranking_args;
    int k = 0;
    std::int64_t synth_train = 6000, synth_test = 1000;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file; flags override its values");
        sub->add_option("--dataset", cfg.dataset)->check(CLI::IsMember({"mnist", "fashionmnist"}));
        sub->add_option("--data-dir", cfg.data_dir);
        sub->add_option("--seed", cfg.seed);
        sub->add_option("--workers", cfg.workers);
        sub->add_option("--out", cfg.out_dir);
        sub->add_option("--val-fraction", cfg.val_fraction);
        sub->add_option("--batch-size", cfg.batch_size);
    };

    auto* train = app.add_subcommand("train", "train the convnet and write a checkpoint");
    add_common(train);
    train->add_option("--arch", cfg.arch);
    train->add_option("--epochs", cfg.epochs);
    train->add_option("--lr", cfg.lr);

    auto* shapley = app.add_subcommand("shapley", "rank one layer's units by shapley value");
    add_common(shapley);
    shapley->add_option("--checkpoint", ckpt_path)->required();
    shapley->add_option("--layer", cfg.layer);
    shapley->add_option("--method", cfg.method,
                        "exact_subsets|exact_permutations|truncated_k|sampled_permutations|sampled_marginals");
    shapley->add_option("--samples", cfg.samples);
    shapley->add_option("--k", cfg.truncation_k);
    shapley->add_option("--nu-limit", cfg.nu_limit, "cap on the evaluation-set size (0 = whole validation split)");
    shapley->add_option("--cache-max-players", cfg.cache_max_players);

    auto* sw = app.add_subcommand("switch", "train importance switches for every maskable layer");
    add_common(sw);
    sw->add_option("--checkpoint", ckpt_path)->required();
    sw->add_option("--alpha0", cfg.alpha0);
    sw->add_option("--epochs", cfg.switch_epochs);
    sw->add_option("--lr", cfg.switch_lr);
    sw->add_flag("--fast", cfg.fast, "10 epochs instead of the full schedule");

    auto* compare = app.add_subcommand("compare", "compare two ranking result files");
    add_common(compare);
    compare->add_option("--a", a_path)->required();
    compare->add_option("--b", b_path)->required();
    compare->add_option("--k", k);

    auto* prune = app.add_subcommand("prune", "slice the network to the top-ranked units and optionally retrain");
    add_common(prune);
    prune->add_option("--checkpoint", ckpt_path)->required();
    prune->add_option("--keep", cfg.keep, "kept units per maskable layer, e.g. 5,7,45,20")->required();
    prune->add_option("--ranking", ranking_args, "layer=result.json (repeatable)");
    prune->add_option("--retrain-epochs", cfg.retrain_epochs);
    prune->add_option("--lr", cfg.lr);

    auto* maps = app.add_subcommand("export-maps", "write per-filter feature maps as PGM images");
    add_common(maps);
    maps->add_option("--checkpoint", ckpt_path)->required();
    maps->add_option("--layer", cfg.layer);
    maps->add_option("--ranking", ranking_path, "result file ordering the filters");
    maps->add_option("--inputs", inputs, "comma-separated test-set indices");

    auto* synth = app.add_subcommand("make-synth", "generate a synthetic IDX dataset (demo/testing)");
    add_common(synth);
    synth->add_option("--train-count", synth_train);
    synth->add_option("--test-count", synth_test);

    CLI11_PARSE(app, argc, argv);

    try {
        nr::set_worker_count(cfg.workers);
        if (train->parsed()) return cmd_train(cfg);
        if (shapley->parsed()) return cmd_shapley(cfg, ckpt_path);
        if (sw->parsed()) return cmd_switch(cfg, ckpt_path);
        if (compare->parsed()) return cmd_compare(cfg, a_path, b_path, k);
        if (prune->parsed()) return cmd_prune(cfg, ckpt_path, ranking_args);
        if (maps->parsed()) return cmd_export_maps(cfg, ckpt_path, ranking_path, inputs);
        if (synth->parsed()) return cmd_make_synth(cfg, synth_train, synth_test);
    } catch (const nr::InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
