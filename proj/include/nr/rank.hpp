#pragma once

#include <map>
#include <string>
#include <vector>

namespace nr {

// |top_k(a) ∩ top_k(b)| as sets; both orderings must be permutations of the
// same {0..N-1}.
int top_k_overlap(const std::vector<int>& order_a, const std::vector<int>& order_b, int k);

// Kendall tau-a over the implied rank vectors (orderings are strict, no tie
// handling needed).
double kendall_tau(const std::vector<int>& order_a, const std::vector<int>& order_b);

// P(X >= overlap) where X = |random k-subset ∩ fixed k-subset| over a
// population of N, i.e. the hypergeometric upper tail.
double agreement_significance(int overlap, int k, int n);

// Expected overlap of two independent uniform top-k sets: k^2 / N.
double random_baseline(int k, int n);

struct RankingReport {
    int layer_index = -1;
    std::string layer_name;
    std::string method_a, method_b;
    std::vector<int> order_a, order_b;
    std::map<int, int> top_k_overlaps;
    std::map<int, double> random_baselines;
    std::map<int, double> significance;  // hypergeometric tail per k
    double rank_correlation = 0.0;       // Kendall tau over full orderings
};

RankingReport make_ranking_report(const std::vector<int>& order_a, const std::vector<int>& order_b,
                                  const std::vector<int>& ks, const std::string& method_a,
                                  const std::string& method_b, int layer_index = -1,
                                  const std::string& layer_name = "");

// Table-style Markdown rendering; indices common to both top-k sets are
// bolded.
std::string ranking_report_markdown(const RankingReport& report, int k);

// Default top-k per layer width: 10 for wide layers (>25 units), else 5.
int default_top_k(int n_units);

}  // namespace nr
