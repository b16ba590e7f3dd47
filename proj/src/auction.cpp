#include "cpmm/auction.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "cpmm/error.hpp"

namespace cpmm::auction {

void WorkflowDag::validate() const {
    if (tasks.empty()) throw ValidationError("workflow has no tasks");
    if (tasks.size() > 64) throw ValidationError("workflow exceeds 64 tasks");
    std::set<std::string> ids;
    for (const auto& t : tasks)
        if (!ids.insert(t.id).second) throw ValidationError("duplicate task id '" + t.id + "'");
    for (const auto& [u, v] : edges)
        if (!ids.count(u) || !ids.count(v)) throw ValidationError("edge references unknown task");
    if (topological_order().size() != tasks.size()) throw ValidationError("workflow dependency graph has a cycle");
}

std::optional<std::size_t> WorkflowDag::index_of(const std::string& task_id) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i].id == task_id) return i;
    return std::nullopt;
}

std::vector<std::string> WorkflowDag::topological_order() const {
    std::vector<int> indegree(tasks.size(), 0);
    std::vector<std::vector<std::size_t>> out(tasks.size());
    for (const auto& [u, v] : edges) {
        auto iu = index_of(u), iv = index_of(v);
        if (!iu || !iv) continue;
        out[*iu].push_back(*iv);
        ++indegree[*iv];
    }
    std::vector<std::string> order;
    std::vector<bool> done(tasks.size(), false);
    while (order.size() < tasks.size()) {
        bool progressed = false;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (done[i] || indegree[i] != 0) continue;
            done[i] = true;
            order.push_back(tasks[i].id);
            for (auto j : out[i]) --indegree[j];
            progressed = true;
            break;
        }
        if (!progressed) break;
    }
    return order;
}

Amount PaymentVector::total() const {
    Amount t = 0;
    for (const auto& [bidder, p] : payments) t += p;
    return t;
}

bool validate_bid(const Bid& bid, const WorkflowDag& w, const CapabilityIndex& capabilities) {
    if (bid.tasks.empty() || bid.price < 0) return false;
    std::set<std::string> task_set(bid.tasks.begin(), bid.tasks.end());
    if (task_set.size() != bid.tasks.size()) return false;
    if (bid.quality_offers.size() != task_set.size()) return false;
    auto caps = capabilities.find(bid.bidder);
    for (const auto& tid : bid.tasks) {
        auto idx = w.index_of(tid);
        if (!idx) return false;
        const Task& task = w.tasks[*idx];
        auto offer = bid.quality_offers.find(tid);
        if (offer == bid.quality_offers.end()) return false;
        if (offer->second.size() != task.min_quality.size()) return false;
        if (!offer->second.dominates(task.min_quality)) return false;
        if (caps == capabilities.end() || !caps->second.count(task.capability)) return false;
    }
    return true;
}

namespace {

struct CoverSearch {
    std::vector<std::uint64_t> masks;
    std::vector<Amount> prices;
    std::vector<std::string> ids;
    std::vector<std::vector<std::size_t>> by_task;
    std::vector<double> task_bound;
    std::uint64_t full = 0;

    Amount best_cost = std::numeric_limits<Amount>::max();
    std::vector<std::string> best_ids;
    std::vector<std::size_t> best_set;
    std::vector<std::size_t> current;

    double bound(std::uint64_t covered) const {
        double b = 0.0;
        for (std::size_t t = 0; t < task_bound.size(); ++t)
            if (!(covered >> t & 1U)) b += task_bound[t];
        return b;
    }

    void record(Amount cost) {
        std::vector<std::string> chosen;
        for (auto i : current) chosen.push_back(ids[i]);
        std::sort(chosen.begin(), chosen.end());
        if (cost < best_cost || (cost == best_cost && chosen < best_ids)) {
            best_cost = cost;
            best_ids = std::move(chosen);
            best_set = current;
        }
    }

    void run(std::uint64_t covered, Amount cost) {
        if (covered == full) {
            record(cost);
            return;
        }
        if (best_cost != std::numeric_limits<Amount>::max() &&
            static_cast<double>(cost) + bound(covered) > static_cast<double>(best_cost) + 1e-7)
            return;
        std::size_t t = 0;
        while (covered >> t & 1U) ++t;
        for (auto b : by_task[t]) {
            if (masks[b] & covered) continue;
            current.push_back(b);
            run(covered | masks[b], cost + prices[b]);
            current.pop_back();
        }
    }
};

std::uint64_t task_mask(const WorkflowDag& w, const Bid& bid) {
    if (bid.tasks.empty()) throw ValidationError("bid '" + bid.id + "' has an empty task set");
    if (bid.price < 0) throw ValidationError("bid '" + bid.id + "' has a negative price");
    std::uint64_t m = 0;
    for (const auto& tid : bid.tasks) {
        auto idx = w.index_of(tid);
        if (!idx) throw ValidationError("bid '" + bid.id + "' names unknown task '" + tid + "'");
        m |= std::uint64_t{1} << *idx;
    }
    return m;
}

}  // namespace

std::optional<Allocation> cheapest_cover(const WorkflowDag& w, const std::vector<Bid>& bids) {
    if (w.tasks.empty() || w.tasks.size() > 64) throw ValidationError("workflow must have 1..64 tasks");
    CoverSearch s;
    const std::size_t n = w.tasks.size();
    s.full = n == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1;
    s.by_task.resize(n);
    s.task_bound.assign(n, std::numeric_limits<double>::infinity());
    for (std::size_t b = 0; b < bids.size(); ++b) {
        std::uint64_t m = task_mask(w, bids[b]);
        s.masks.push_back(m);
        s.prices.push_back(bids[b].price);
        s.ids.push_back(bids[b].id);
        double share = static_cast<double>(bids[b].price) / static_cast<double>(__builtin_popcountll(m));
        for (std::size_t t = 0; t < n; ++t) {
            if (!(m >> t & 1U)) continue;
            s.by_task[t].push_back(b);
            s.task_bound[t] = std::min(s.task_bound[t], share);
        }
    }
    for (const auto& list : s.by_task)
        if (list.empty()) return std::nullopt;
    for (auto& list : s.by_task)
        std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
            return s.prices[a] != s.prices[b] ? s.prices[a] < s.prices[b] : s.ids[a] < s.ids[b];
        });
    s.run(0, 0);
    if (s.best_cost == std::numeric_limits<Amount>::max()) return std::nullopt;

    Allocation a;
    a.chosen = s.best_ids;
    a.total_price = s.best_cost;
    for (auto b : s.best_set)
        for (const auto& tid : bids[b].tasks) a.cover[tid] = bids[b].id;
    return a;
}

Allocation winner_determination(const WorkflowDag& w, const std::vector<Bid>& bids, Amount budget) {
    auto best = cheapest_cover(w, bids);
    if (!best) throw InfeasibleError("no exact cover of the workflow exists");
    if (best->total_price > budget)
        throw InfeasibleError("cheapest cover costs " + std::to_string(best->total_price) + ", budget is " +
                              std::to_string(budget));
    return *best;
}

Amount reserve_price(const WorkflowDag& w, Amount budget) {
    return budget / static_cast<Amount>(w.tasks.size());
}

Amount counterfactual_cost(const WorkflowDag& w, const std::vector<Bid>& bids, const std::string& bidder,
                           Amount budget) {
    std::vector<Bid> remaining;
    std::set<std::string> coverable;
    for (const auto& b : bids) {
        if (b.bidder == bidder) continue;
        remaining.push_back(b);
        coverable.insert(b.tasks.begin(), b.tasks.end());
    }
    const Amount reserve = reserve_price(w, budget);
    auto with_reserves = [&](bool all) {
        std::vector<Bid> out = remaining;
        for (const auto& t : w.tasks)
            if (all || !coverable.count(t.id)) out.push_back(Bid{"~reserve:" + t.id, "~reserve", {t.id}, {}, reserve});
        return out;
    };
    if (auto c = cheapest_cover(w, with_reserves(false))) return c->total_price;
    return cheapest_cover(w, with_reserves(true))->total_price;
}

PaymentVector vcg_payments(const WorkflowDag& w, const std::vector<Bid>& bids, const Allocation& alloc, Amount budget) {
    std::map<std::string, const Bid*> by_id;
    for (const auto& b : bids) by_id[b.id] = &b;
    std::map<std::string, Amount> winner_price;
    for (const auto& id : alloc.chosen) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("allocation names unknown bid '" + id + "'");
        winner_price[it->second->bidder] += it->second->price;
    }
    PaymentVector pv;
    pv.budget = budget;
    __int128 sum = 0;
    for (const auto& [bidder, price] : winner_price) {
        Amount others = alloc.total_price - price;
        Amount pay = counterfactual_cost(w, bids, bidder, budget) - others;
        pv.uncapped[bidder] = pay;
        sum += pay;
    }
    pv.payments = pv.uncapped;
    if (sum > budget) {
        pv.cap_binding = true;
        for (auto& [bidder, pay] : pv.payments)
            pay = static_cast<Amount>(static_cast<__int128>(pv.uncapped[bidder]) * budget / sum);
    }
    return pv;
}

namespace {

double bidder_utility(const WorkflowDag& w, const std::vector<Bid>& bids, const std::map<std::string, Amount>& costs,
                      const std::string& bidder, Amount budget, bool& cap_binding) {
    cap_binding = false;
    Allocation alloc;
    try {
        alloc = winner_determination(w, bids, budget);
    } catch (const InfeasibleError&) {
        return 0.0;
    }
    PaymentVector pv = vcg_payments(w, bids, alloc, budget);
    cap_binding = pv.cap_binding;
    auto pay = pv.payments.find(bidder);
    if (pay == pv.payments.end()) return 0.0;
    double u = static_cast<double>(pay->second);
    for (const auto& id : alloc.chosen)
        for (const auto& b : bids)
            if (b.id == id && b.bidder == bidder) u -= static_cast<double>(costs.at(id));
    return u;
}

}  // namespace

ProbeReport truthfulness_probe(const WorkflowDag& w, const std::vector<Bid>& bids,
                               const std::map<std::string, Amount>& true_costs,
                               const std::vector<Deviation>& deviations, Amount budget) {
    ProbeReport report;
    std::map<std::string, std::pair<double, bool>> truthful;
    for (const auto& dev : deviations) {
        auto it = std::find_if(bids.begin(), bids.end(), [&](const Bid& b) { return b.id == dev.bid_id; });
        if (it == bids.end()) throw ValidationError("deviation names unknown bid '" + dev.bid_id + "'");
        DeviationOutcome out;
        out.deviation = dev;
        out.bidder = it->bidder;
        if (!truthful.count(out.bidder)) {
            bool cap = false;
            double u = bidder_utility(w, bids, true_costs, out.bidder, budget, cap);
            truthful[out.bidder] = {u, cap};
        }
        out.truthful_utility = truthful[out.bidder].first;
        out.truthful_cap_binding = truthful[out.bidder].second;
        std::vector<Bid> misreport = bids;
        for (auto& b : misreport)
            if (b.id == dev.bid_id) b.price = dev.reported_price;
        out.deviated_utility = bidder_utility(w, misreport, true_costs, out.bidder, budget, out.deviated_cap_binding);
        if (out.profitable() && report.pass) {
            report.pass = false;
            report.counterexample = out;
        }
        report.outcomes.push_back(out);
    }
    return report;
}

}  // namespace cpmm::auction
