#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nr/errors.hpp"

namespace nr {

// Subset of a layer's units, canonical bitset representation (uint64 blocks,
// LSB = player 0). Keys are lowercase hex of the bit pattern, so equal
// coalitions always map to the same cache entry.
class Coalition {
  public:
    explicit Coalition(int n_players) : n_(check_n(n_players)), bits_((static_cast<std::size_t>(n_) + 63) / 64, 0) {}

    static Coalition empty(int n_players) { return Coalition(n_players); }
    static Coalition grand(int n_players) {
        Coalition c(n_players);
        for (int i = 0; i < n_players; ++i) c.add(i);
        return c;
    }
    static Coalition from_mask(int n_players, std::uint64_t mask) {
        if (n_players > 64) throw InputError("from_mask supports at most 64 players");
        Coalition c(n_players);
        c.bits_[0] = mask;
        return c;
    }
    static Coalition from_members(int n_players, const std::vector<int>& members) {
        Coalition c(n_players);
        for (int i : members) c.add(i);
        return c;
    }

    int n_players() const { return n_; }
    int size() const;
    bool contains(int i) const {
        check_idx(i);
        return (bits_[static_cast<std::size_t>(i) / 64] >> (i % 64)) & 1u;
    }
    void add(int i) {
        check_idx(i);
        bits_[static_cast<std::size_t>(i) / 64] |= std::uint64_t(1) << (i % 64);
    }
    void remove(int i) {
        check_idx(i);
        bits_[static_cast<std::size_t>(i) / 64] &= ~(std::uint64_t(1) << (i % 64));
    }
    Coalition with(int i) const {
        Coalition c = *this;
        c.add(i);
        return c;
    }
    Coalition without(int i) const {
        Coalition c = *this;
        c.remove(i);
        return c;
    }

    std::uint64_t low_mask() const { return bits_[0]; }
    std::vector<int> members() const;
    std::vector<std::uint8_t> active_bits() const;  // length n, 1 where member
    std::string key() const;

    bool operator==(const Coalition& o) const { return n_ == o.n_ && bits_ == o.bits_; }

  private:
    static int check_n(int n) {
        if (n <= 0) throw InputError("coalition needs at least one player");
        return n;
    }
    void check_idx(int i) const {
        if (i < 0 || i >= n_) throw InputError("player index " + std::to_string(i) + " out of range [0," + std::to_string(n_) + ")");
    }
    int n_;
    std::vector<std::uint64_t> bits_;
};

// Payoff memoization with optional JSON persistence. Values for equal keys
// are identical by purity of the characteristic function, so concurrent
// last-write-wins inserts are safe.
class PayoffCache {
  public:
    std::optional<double> lookup(const std::string& key) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = map_.find(key);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }
    void insert(const std::string& key, double value) {
        std::lock_guard<std::mutex> lock(mu_);
        map_[key] = value;
    }
    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return map_.size();
    }

    // File layout: {"format": "nr-payoff-cache", "meta": {...}, "payoffs": {...}}.
    // Loading with a mismatched meta discards the stored payoffs.
    void save(const std::string& path, const std::string& meta_json) const;
    // returns true when an existing file matched and was loaded
    bool load(const std::string& path, const std::string& meta_json);

  private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, double> map_;
};

// A per-layer coalitional game: N players and a pure characteristic
// function. eval_count tracks actual payoff computations (cache misses).
class CoalitionGame {
  public:
    using PayoffFn = std::function<double(const Coalition&)>;
    // fills out[mask] for every mask in [0, 2^n); used by engines that can
    // enumerate the whole power set faster than one coalition at a time
    using BulkFn = std::function<void(std::vector<double>&)>;

    CoalitionGame(int n_players, PayoffFn fn, int layer_index = -1)
        : n_(n_players), layer_index_(layer_index), fn_(std::move(fn)), state_(std::make_shared<State>()) {
        if (n_players <= 0) throw InputError("game needs at least one player");
    }

    int n_players() const { return n_; }
    int layer_index() const { return layer_index_; }

    double payoff(const Coalition& c);
    std::int64_t eval_count() const { return state_->evals.load(); }
    PayoffCache& cache() { return state_->cache; }

    void set_bulk_fn(BulkFn fn) { bulk_ = std::move(fn); }
    bool has_bulk() const { return static_cast<bool>(bulk_); }
    // mirror bulk-computed payoffs into the cache (for persistence); off by
    // default since wide layers would store millions of entries
    void set_cache_bulk_results(bool on) { cache_bulk_ = on; }
    // all 2^n payoffs indexed by bitmask (n <= 25 enforced by callers)
    void payoff_all(std::vector<double>& out);

    // convenience for tests: game backed by a payoff table indexed by mask
    static CoalitionGame from_table(int n_players, std::vector<double> table);

  private:
    struct State {
        PayoffCache cache;
        std::atomic<std::int64_t> evals{0};
    };
    int n_;
    int layer_index_;
    PayoffFn fn_;
    BulkFn bulk_;
    bool cache_bulk_ = false;
    std::shared_ptr<State> state_;
};

}  // namespace nr
