#include "nr/rank.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nr/errors.hpp"

namespace nr {

namespace {

void check_permutations(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw InputError("orderings cover different player counts");
    const int n = static_cast<int>(a.size());
    std::vector<char> seen_a(static_cast<std::size_t>(n), 0), seen_b(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        if (a[static_cast<std::size_t>(i)] < 0 || a[static_cast<std::size_t>(i)] >= n || seen_a[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])]++)
            throw InputError("order_a is not a permutation of 0..N-1");
        if (b[static_cast<std::size_t>(i)] < 0 || b[static_cast<std::size_t>(i)] >= n || seen_b[static_cast<std::size_t>(b[static_cast<std::size_t>(i)])]++)
            throw InputError("order_b is not a permutation of 0..N-1");
    }
}

double log_binomial(int n, int k) { return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0); }

}  // namespace

int top_k_overlap(const std::vector<int>& order_a, const std::vector<int>& order_b, int k) {
    check_permutations(order_a, order_b);
    if (k < 0 || k > static_cast<int>(order_a.size())) throw InputError("k out of range");
    std::set<int> a(order_a.begin(), order_a.begin() + k);
    int overlap = 0;
    for (int i = 0; i < k; ++i) overlap += a.count(order_b[static_cast<std::size_t>(i)]) ? 1 : 0;
    return overlap;
}

double kendall_tau(const std::vector<int>& order_a, const std::vector<int>& order_b) {
    check_permutations(order_a, order_b);
    const int n = static_cast<int>(order_a.size());
    if (n < 2) return 1.0;
    std::vector<int> rank_a(static_cast<std::size_t>(n)), rank_b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        rank_a[static_cast<std::size_t>(order_a[static_cast<std::size_t>(i)])] = i;
        rank_b[static_cast<std::size_t>(order_b[static_cast<std::size_t>(i)])] = i;
    }
    std::int64_t concordant = 0, discordant = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const int da = rank_a[static_cast<std::size_t>(i)] - rank_a[static_cast<std::size_t>(j)];
            const int db = rank_b[static_cast<std::size_t>(i)] - rank_b[static_cast<std::size_t>(j)];
            if ((da > 0) == (db > 0))
                ++concordant;
            else
                ++discordant;
        }
    return static_cast<double>(concordant - discordant) / (0.5 * n * (n - 1));
}

double agreement_significance(int overlap, int k, int n) {
    if (overlap < 0 || k < 0 || overlap > k || k > n) throw InputError("invalid overlap/k/N counts");
    // X ~ Hypergeometric(N, K=k, draws=k); P(X >= overlap)
    double p = 0.0;
    for (int j = overlap; j <= k; ++j) {
        if (k - j > n - k) continue;  // impossible configuration
        p += std::exp(log_binomial(k, j) + log_binomial(n - k, k - j) - log_binomial(n, k));
    }
    return std::min(1.0, p);
}

double random_baseline(int k, int n) { return static_cast<double>(k) * k / n; }

int default_top_k(int n_units) { return n_units > 25 ? 10 : 5; }

RankingReport make_ranking_report(const std::vector<int>& order_a, const std::vector<int>& order_b,
                                  const std::vector<int>& ks, const std::string& method_a, const std::string& method_b,
                                  int layer_index, const std::string& layer_name) {
    RankingReport r;
    r.layer_index = layer_index;
    r.layer_name = layer_name;
    r.method_a = method_a;
    r.method_b = method_b;
    r.order_a = order_a;
    r.order_b = order_b;
    r.rank_correlation = kendall_tau(order_a, order_b);
    const int n = static_cast<int>(order_a.size());
    for (int k : ks) {
        const int ov = top_k_overlap(order_a, order_b, k);
        r.top_k_overlaps[k] = ov;
        r.random_baselines[k] = random_baseline(k, n);
        r.significance[k] = agreement_significance(ov, k, n);
    }
    return r;
}

std::string ranking_report_markdown(const RankingReport& report, int k) {
    std::set<int> a(report.order_a.begin(), report.order_a.begin() + k);
    std::set<int> b(report.order_b.begin(), report.order_b.begin() + k);
    auto row = [&](const std::string& method, const std::vector<int>& order, const std::set<int>& other) {
        std::string s = "| " + report.layer_name + " | " + method + " | ";
        for (int i = 0; i < k; ++i) {
            if (i) s += ", ";
            const int idx = order[static_cast<std::size_t>(i)];
            s += other.count(idx) ? "**" + std::to_string(idx) + "**" : std::to_string(idx);
        }
        return s + " |\n";
    };
    std::string out;
    out += "| layer | method | top-" + std::to_string(k) + " |\n";
    out += "|---|---|---|\n";
    out += row(report.method_a, report.order_a, b);
    out += row(report.method_b, report.order_b, a);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "\noverlap %d (random baseline %.2f, tail probability %.3g), kendall tau %.3f\n",
                  report.top_k_overlaps.at(k), report.random_baselines.at(k), report.significance.at(k),
                  report.rank_correlation);
    return out + buf;
}

}  // namespace nr
