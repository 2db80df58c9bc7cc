#include "nr/coalition.hpp"

#include <atomic>
#include <bit>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace nr {

int Coalition::size() const {
    int n = 0;
    for (std::uint64_t b : bits_) n += std::popcount(b);
    return n;
}

std::vector<int> Coalition::members() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (int i = 0; i < n_; ++i)
        if (contains(i)) out.push_back(i);
    return out;
}

std::vector<std::uint8_t> Coalition::active_bits() const {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(n_), 0);
    for (int i = 0; i < n_; ++i) out[static_cast<std::size_t>(i)] = contains(i) ? 1 : 0;
    return out;
}

std::string Coalition::key() const {
    static const char* hex = "0123456789abcdef";
    std::string s;
    bool started = false;
    for (std::size_t w = bits_.size(); w-- > 0;) {
        for (int shift = 60; shift >= 0; shift -= 4) {
            const int nib = static_cast<int>((bits_[w] >> shift) & 0xf);
            if (!started && nib == 0) continue;
            started = true;
            s += hex[nib];
        }
    }
    return started ? s : "0";
}

void PayoffCache::save(const std::string& path, const std::string& meta_json) const {
    nlohmann::json j;
    j["format"] = "nr-payoff-cache";
    j["version"] = 1;
    j["meta"] = nlohmann::json::parse(meta_json);
    nlohmann::json payoffs = nlohmann::json::object();
    {
        std::lock_guard<std::mutex> lock(mu_);
        for (const auto& [k, v] : map_) payoffs[k] = v;
    }
    j["payoffs"] = std::move(payoffs);
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path);
    if (!f) throw InputError("cannot write payoff cache " + path);
    f << j.dump() << "\n";
}

bool PayoffCache::load(const std::string& path, const std::string& meta_json) {
    std::ifstream f(path);
    if (!f) return false;
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception&) {
        return false;  // unreadable cache is treated as absent
    }
    if (j.value("format", "") != "nr-payoff-cache") return false;
    if (j.contains("meta") && j["meta"] != nlohmann::json::parse(meta_json)) return false;
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [k, v] : j.at("payoffs").items()) map_[k] = v.get<double>();
    return true;
}

double CoalitionGame::payoff(const Coalition& c) {
    if (c.n_players() != n_) throw InputError("coalition is over a different player set");
    const std::string key = c.key();
    if (auto hit = state_->cache.lookup(key)) return *hit;
    const double v = fn_(c);
    ++state_->evals;
    state_->cache.insert(key, v);
    return v;
}

void CoalitionGame::payoff_all(std::vector<double>& out) {
    if (n_ > 25) throw InputError("power-set evaluation limited to 25 players, got " + std::to_string(n_));
    const std::size_t total = std::size_t(1) << n_;
    out.resize(total);
    if (bulk_) {
        bulk_(out);
        state_->evals += static_cast<std::int64_t>(total);
        if (cache_bulk_)
            for (std::uint64_t mask = 0; mask < total; ++mask)
                state_->cache.insert(Coalition::from_mask(n_, mask).key(), out[static_cast<std::size_t>(mask)]);
        return;
    }
    for (std::uint64_t mask = 0; mask < total; ++mask)
        out[static_cast<std::size_t>(mask)] = payoff(Coalition::from_mask(n_, mask));
}

CoalitionGame CoalitionGame::from_table(int n_players, std::vector<double> table) {
    if (table.size() != (std::size_t(1) << n_players)) throw InputError("payoff table size != 2^n");
    auto shared = std::make_shared<std::vector<double>>(std::move(table));
    return CoalitionGame(
        n_players, [shared](const Coalition& c) { return (*shared)[static_cast<std::size_t>(c.low_mask())]; });
}

}  // namespace nr
