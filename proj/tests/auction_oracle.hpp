#pragma once

// Brute-force reference for winner determination and VCG payments: plain
// subset enumeration over bids encoded as task bitmasks. Shares no code with
// the branch-and-bound solver.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpmm/auction.hpp"

namespace oracle {

struct RawBid {
    std::uint32_t mask;
    std::int64_t price;
    std::string bidder;
    std::string id;
};

struct Cover {
    std::int64_t cost;
    std::vector<std::string> ids;  // sorted
};

inline std::optional<Cover> brute_cover(int tasks, const std::vector<RawBid>& bids) {
    const std::uint32_t full = (1u << tasks) - 1u;
    std::optional<Cover> best;
    const std::size_t m = bids.size();
    for (std::uint64_t subset = 1; subset < (std::uint64_t{1} << m); ++subset) {
        std::uint32_t covered = 0;
        std::int64_t cost = 0;
        bool overlap = false;
        for (std::size_t i = 0; i < m && !overlap; ++i) {
            if (!(subset >> i & 1u)) continue;
            if (covered & bids[i].mask) overlap = true;
            covered |= bids[i].mask;
            cost += bids[i].price;
        }
        if (overlap || covered != full || (best && cost > best->cost)) continue;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < m; ++i)
            if (subset >> i & 1u) ids.push_back(bids[i].id);
        std::sort(ids.begin(), ids.end());
        if (!best || cost < best->cost || ids < best->ids) best = Cover{cost, ids};
    }
    return best;
}

struct Vcg {
    std::map<std::string, std::int64_t> uncapped;
    std::map<std::string, std::int64_t> capped;
    bool cap_binding = false;
};

inline std::int64_t brute_counterfactual(int tasks, const std::vector<RawBid>& bids, const std::string& bidder,
                                         std::int64_t budget) {
    const std::int64_t reserve = budget / tasks;
    std::vector<RawBid> rest;
    std::uint32_t seen = 0;
    for (const auto& b : bids)
        if (b.bidder != bidder) {
            rest.push_back(b);
            seen |= b.mask;
        }
    std::vector<RawBid> partial = rest;
    for (int t = 0; t < tasks; ++t)
        if (!(seen >> t & 1u)) partial.push_back({1u << t, reserve, "~r", "~r" + std::to_string(t)});
    if (auto c = brute_cover(tasks, partial)) return c->cost;
    std::vector<RawBid> all = rest;
    for (int t = 0; t < tasks; ++t) all.push_back({1u << t, reserve, "~r", "~r" + std::to_string(t)});
    return brute_cover(tasks, all)->cost;
}

inline Vcg brute_vcg(int tasks, const std::vector<RawBid>& bids, const Cover& alloc, std::int64_t budget) {
    Vcg out;
    std::map<std::string, std::int64_t> own;
    for (const auto& id : alloc.ids)
        for (const auto& b : bids)
            if (b.id == id) own[b.bidder] += b.price;
    std::int64_t sum = 0;
    for (const auto& [bidder, price] : own) {
        std::int64_t p = brute_counterfactual(tasks, bids, bidder, budget) - (alloc.cost - price);
        out.uncapped[bidder] = p;
        sum += p;
    }
    out.capped = out.uncapped;
    if (sum > budget) {
        out.cap_binding = true;
        for (auto& [bidder, p] : out.capped) p = out.uncapped[bidder] * budget / sum;
    }
    return out;
}

inline cpmm::auction::WorkflowDag make_dag(int tasks) {
    cpmm::auction::WorkflowDag w;
    for (int t = 0; t < tasks; ++t)
        w.tasks.push_back({std::string(1, static_cast<char>('A' + t)), "cap", cpmm::econ::QualityVector({0.0})});
    return w;
}

inline std::vector<cpmm::auction::Bid> to_bids(int tasks, const std::vector<RawBid>& raw) {
    std::vector<cpmm::auction::Bid> out;
    for (const auto& r : raw) {
        cpmm::auction::Bid b;
        b.id = r.id;
        b.bidder = r.bidder;
        b.price = r.price;
        for (int t = 0; t < tasks; ++t)
            if (r.mask >> t & 1u) {
                std::string tid(1, static_cast<char>('A' + t));
                b.tasks.push_back(tid);
                b.quality_offers.emplace(tid, cpmm::econ::QualityVector({1.0}));
            }
        out.push_back(b);
    }
    return out;
}

}  // namespace oracle
