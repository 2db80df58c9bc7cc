#include "nr/shapley.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "nr/parallel.hpp"

namespace nr {

namespace {

class WallTimer {
  public:
    WallTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

double binomial(int n, int k) {
    // exact in double for n <= 25
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

void fill_grand_empty(CoalitionGame& game, ShapleyResult& r) {
    r.payoff_grand = game.payoff(Coalition::grand(game.n_players()));
    r.payoff_empty = game.payoff(Coalition::empty(game.n_players()));
}

// next-larger integer with the same popcount (Gosper's hack)
std::uint64_t next_same_popcount(std::uint64_t v) {
    const std::uint64_t c = v & (~v + 1);
    const std::uint64_t r = v + c;
    return (((r ^ v) >> 2) / c) | r;
}

}  // namespace

const char* shapley_method_name(ShapleyMethod m) {
    switch (m) {
        case ShapleyMethod::exact_subsets: return "exact_subsets";
        case ShapleyMethod::exact_permutations: return "exact_permutations";
        case ShapleyMethod::truncated_k: return "truncated_k";
        case ShapleyMethod::sampled_permutations: return "sampled_permutations";
        case ShapleyMethod::sampled_marginals: return "sampled_marginals";
    }
    return "?";
}

ShapleyMethod shapley_method_from_name(const std::string& name) {
    for (ShapleyMethod m : {ShapleyMethod::exact_subsets, ShapleyMethod::exact_permutations, ShapleyMethod::truncated_k,
                            ShapleyMethod::sampled_permutations, ShapleyMethod::sampled_marginals})
        if (name == shapley_method_name(m)) return m;
    throw InputError("unknown shapley method '" + name + "'");
}

ShapleyResult exact_shapley_subsets(CoalitionGame& game) {
    WallTimer timer;
    const int n = game.n_players();
    if (n > 25) throw InputError("exact_shapley_subsets: exhaustive mode limited to 25 players, got " + std::to_string(n));

    std::vector<double> payoffs;
    game.payoff_all(payoffs);

    // weight of a coalition of size s: s!(n-s-1)!/n! = 1 / (n * C(n-1, s))
    std::vector<double> weight(static_cast<std::size_t>(n), 0.0);
    for (int s = 0; s < n; ++s) weight[static_cast<std::size_t>(s)] = 1.0 / (n * binomial(n - 1, s));

    ShapleyResult r;
    r.method = ShapleyMethod::exact_subsets;
    r.n_players = n;
    r.values.assign(static_cast<std::size_t>(n), 0.0);
    const std::uint64_t total = std::uint64_t(1) << n;

    parallel_for(n, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) {
            const std::uint64_t bit = std::uint64_t(1) << i;
            double acc = 0.0;
            for (std::uint64_t mask = 0; mask < total; ++mask) {
                if (mask & bit) continue;
                const int s = std::popcount(mask);
                acc += weight[static_cast<std::size_t>(s)] *
                       (payoffs[static_cast<std::size_t>(mask | bit)] - payoffs[static_cast<std::size_t>(mask)]);
            }
            r.values[static_cast<std::size_t>(i)] = acc;
        }
    });

    r.eval_count = game.eval_count();
    r.payoff_grand = payoffs[static_cast<std::size_t>(total - 1)];
    r.payoff_empty = payoffs[0];
    r.wall_seconds = timer.seconds();
    return r;
}

ShapleyResult shapley_from_permutations(CoalitionGame& game, const std::vector<std::vector<int>>& perms) {
    const int n = game.n_players();
    std::vector<double> sum(static_cast<std::size_t>(n), 0.0), sumsq(static_cast<std::size_t>(n), 0.0);
    for (const auto& perm : perms) {
        Coalition c = Coalition::empty(n);
        double prev = game.payoff(c);
        for (int i : perm) {
            c.add(i);
            const double cur = game.payoff(c);
            const double marginal = cur - prev;
            sum[static_cast<std::size_t>(i)] += marginal;
            sumsq[static_cast<std::size_t>(i)] += marginal * marginal;
            prev = cur;
        }
    }
    ShapleyResult r;
    r.n_players = n;
    const double m = static_cast<double>(perms.size());
    r.samples = static_cast<std::int64_t>(perms.size());
    r.values.resize(static_cast<std::size_t>(n));
    r.std_error.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double mean = sum[static_cast<std::size_t>(i)] / m;
        r.values[static_cast<std::size_t>(i)] = mean;
        const double var = m > 1 ? std::max(0.0, (sumsq[static_cast<std::size_t>(i)] / m - mean * mean) * m / (m - 1)) : 0.0;
        r.std_error[static_cast<std::size_t>(i)] = std::sqrt(var / m);
    }
    r.eval_count = game.eval_count();
    return r;
}

ShapleyResult exact_shapley_permutations(CoalitionGame& game) {
    WallTimer timer;
    const int n = game.n_players();
    if (n > 10) throw InputError("exact_shapley_permutations: factorial mode limited to 10 players, got " + std::to_string(n));

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::vector<int>> perms;
    do {
        perms.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));

    ShapleyResult r = shapley_from_permutations(game, perms);
    r.method = ShapleyMethod::exact_permutations;
    r.std_error.clear();  // exact, not an estimate
    r.samples = 0;
    fill_grand_empty(game, r);
    r.eval_count = game.eval_count();
    r.wall_seconds = timer.seconds();
    return r;
}

ShapleyResult truncated_shapley(CoalitionGame& game, int k) {
    WallTimer timer;
    const int n = game.n_players();
    if (k < 1 || k > n) throw InputError("truncated_shapley: k must be in [1, n]");
    if (n > 25) throw InputError("truncated_shapley: exhaustive enumeration limited to 25 players");

    // Per-size averages of the marginal contribution, sizes 0..k-1. The
    // retained size weights (1/n each) renormalize to 1/k, keeping the
    // result a weighted average of marginals.
    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    for (int s = 0; s < k; ++s) {
        const double per_size = 1.0 / (static_cast<double>(k) * binomial(n - 1, s));
        const std::uint64_t first = s == 0 ? 0 : (std::uint64_t(1) << s) - 1;
        const std::uint64_t limit = std::uint64_t(1) << n;
        for (std::uint64_t mask = first;;) {
            const double base = game.payoff(Coalition::from_mask(n, mask));
            for (int i = 0; i < n; ++i) {
                const std::uint64_t bit = std::uint64_t(1) << i;
                if (mask & bit) continue;
                acc[static_cast<std::size_t>(i)] +=
                    per_size * (game.payoff(Coalition::from_mask(n, mask | bit)) - base);
            }
            if (mask == 0) break;
            mask = next_same_popcount(mask);
            if (mask >= limit) break;
        }
    }

    ShapleyResult r;
    r.method = ShapleyMethod::truncated_k;
    r.n_players = n;
    r.truncation_k = k;
    r.values = std::move(acc);
    fill_grand_empty(game, r);
    r.eval_count = game.eval_count();
    r.wall_seconds = timer.seconds();
    return r;
}

ShapleyResult sampled_shapley_permutations(CoalitionGame& game, std::int64_t m, std::uint64_t seed) {
    WallTimer timer;
    if (m < 1) throw InputError("sampled_shapley_permutations: m must be >= 1");
    const int n = game.n_players();

    // all randomness drawn up front, so evaluation scheduling cannot change
    // the result
    std::mt19937_64 rng(seed);
    std::vector<int> base(static_cast<std::size_t>(n));
    std::iota(base.begin(), base.end(), 0);
    std::vector<std::vector<int>> perms;
    perms.reserve(static_cast<std::size_t>(m));
    for (std::int64_t t = 0; t < m; ++t) {
        std::shuffle(base.begin(), base.end(), rng);
        perms.push_back(base);
    }

    ShapleyResult r = shapley_from_permutations(game, perms);
    r.method = ShapleyMethod::sampled_permutations;
    r.seed = seed;
    fill_grand_empty(game, r);
    r.eval_count = game.eval_count();
    r.wall_seconds = timer.seconds();
    return r;
}

ShapleyResult sampled_marginals(CoalitionGame& game, std::int64_t m, std::uint64_t seed, MarginalWeighting weighting) {
    WallTimer timer;
    if (m < 1) throw InputError("sampled_marginals: m must be >= 1");
    const int n = game.n_players();

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_player(0, n - 1);
    std::uniform_int_distribution<int> pick_size(0, n - 1);

    struct Draw {
        int player;
        Coalition without;
    };
    std::vector<Draw> draws;
    draws.reserve(static_cast<std::size_t>(m));
    std::vector<int> others(static_cast<std::size_t>(n) - 1);
    for (std::int64_t t = 0; t < m; ++t) {
        const int i = pick_player(rng);
        others.clear();
        for (int j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        Coalition c = Coalition::empty(n);
        if (weighting == MarginalWeighting::uniform_sizes) {
            const int s = pick_size(rng);
            // partial Fisher-Yates: first s entries become a uniform s-subset
            for (int t2 = 0; t2 < s; ++t2) {
                std::uniform_int_distribution<int> d(t2, static_cast<int>(others.size()) - 1);
                std::swap(others[static_cast<std::size_t>(t2)], others[static_cast<std::size_t>(d(rng))]);
                c.add(others[static_cast<std::size_t>(t2)]);
            }
        } else {
            for (int j : others)
                if (rng() & 1u) c.add(j);
        }
        draws.push_back(Draw{i, std::move(c)});
    }

    std::vector<double> sum(static_cast<std::size_t>(n), 0.0), sumsq(static_cast<std::size_t>(n), 0.0);
    std::vector<std::int64_t> count(static_cast<std::size_t>(n), 0);
    for (const auto& d : draws) {
        const double marginal = game.payoff(d.without.with(d.player)) - game.payoff(d.without);
        sum[static_cast<std::size_t>(d.player)] += marginal;
        sumsq[static_cast<std::size_t>(d.player)] += marginal * marginal;
        ++count[static_cast<std::size_t>(d.player)];
    }

    ShapleyResult r;
    r.method = ShapleyMethod::sampled_marginals;
    r.n_players = n;
    r.samples = m;
    r.seed = seed;
    r.values.assign(static_cast<std::size_t>(n), 0.0);
    r.std_error.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
    r.draws_per_player = count;
    for (int i = 0; i < n; ++i) {
        const auto c = count[static_cast<std::size_t>(i)];
        if (c == 0) continue;  // flagged via draws_per_player
        const double mean = sum[static_cast<std::size_t>(i)] / static_cast<double>(c);
        r.values[static_cast<std::size_t>(i)] = mean;
        if (c > 1) {
            const double var = std::max(
                0.0, (sumsq[static_cast<std::size_t>(i)] / static_cast<double>(c) - mean * mean) *
                         static_cast<double>(c) / static_cast<double>(c - 1));
            r.std_error[static_cast<std::size_t>(i)] = std::sqrt(var / static_cast<double>(c));
        }
    }
    fill_grand_empty(game, r);
    r.eval_count = game.eval_count();
    r.wall_seconds = timer.seconds();
    return r;
}

std::vector<int> rank_players(const std::vector<double>& values) {
    for (double v : values)
        if (std::isnan(v)) throw NumericError("rank_players: NaN in values");
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)])
            return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
        return a < b;
    });
    return order;
}

}  // namespace nr
