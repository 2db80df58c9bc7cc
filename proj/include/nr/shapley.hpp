#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nr/coalition.hpp"

namespace nr {

enum class ShapleyMethod { exact_subsets, exact_permutations, truncated_k, sampled_permutations, sampled_marginals };

const char* shapley_method_name(ShapleyMethod m);
ShapleyMethod shapley_method_from_name(const std::string& name);

struct ShapleyResult {
    std::vector<double> values;
    ShapleyMethod method = ShapleyMethod::exact_subsets;
    int n_players = 0;
    std::int64_t samples = 0;                    // m for sampled methods
    int truncation_k = 0;                        // truncated_k only
    std::uint64_t seed = 0;
    std::vector<double> std_error;               // sampled methods, per player
    std::vector<std::int64_t> draws_per_player;  // sampled_marginals only
    std::int64_t eval_count = 0;
    double payoff_grand = 0.0;
    double payoff_empty = 0.0;
    double wall_seconds = 0.0;
};

// Subset form: SV(i) = sum over C not containing i of
// |C|!(N-|C|-1)!/N! * (v(C u {i}) - v(C)). Requires n <= 25.
ShapleyResult exact_shapley_subsets(CoalitionGame& game);

// Permutation form: the average marginal contribution over all N! join
// orders. Requires n <= 10; serves as the cross-check oracle for the
// subset form.
ShapleyResult exact_shapley_permutations(CoalitionGame& game);

// Shared accumulator: average marginal contributions over the given join
// orders, with per-player standard errors. Exposed so tests can feed the
// full permutation enumeration through the sampling path.
ShapleyResult shapley_from_permutations(CoalitionGame& game, const std::vector<std::vector<int>>& perms);

// Subset form restricted to |C| < k with per-size weights renormalized to
// sum to one, so values stay on the scale of the exact ones. k == n
// reproduces the exact values. Only coalitions of size <= k are evaluated.
ShapleyResult truncated_shapley(CoalitionGame& game, int k);

// Unbiased estimate from m uniformly sampled permutations.
ShapleyResult sampled_shapley_permutations(CoalitionGame& game, std::int64_t m, std::uint64_t seed);

// Single-node-difference sampling: each draw picks a player uniformly, a
// coalition size uniformly from {0..n-1}, then a uniform coalition of that
// size from the remaining players, and records v(C u {i}) - v(C).
// uniform_sizes matches the permutation-induced distribution (Shapley-
// unbiased); uniform_subsets instead draws C uniformly over all subsets,
// which estimates the Banzhaf-weighted semivalue and is kept behind this
// explicit flag.
enum class MarginalWeighting { uniform_sizes, uniform_subsets };
ShapleyResult sampled_marginals(CoalitionGame& game, std::int64_t m, std::uint64_t seed,
                                MarginalWeighting weighting = MarginalWeighting::uniform_sizes);

// Stable descending order, ties broken by ascending player index.
// Throws NumericError on NaN.
std::vector<int> rank_players(const std::vector<double>& values);

}  // namespace nr
