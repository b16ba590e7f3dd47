#pragma once

// Workflow-composition combinatorial auction: exact winner determination by
// branch-and-bound and VCG payments with per-task reserves and a budget cap.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cpmm/economic.hpp"

namespace cpmm::auction {

/// Amounts are integer minor units of the scenario currency.
using Amount = std::int64_t;

struct Task {
    std::string id;
    std::string capability;
    econ::QualityVector min_quality;
};

struct WorkflowDag {
    std::vector<Task> tasks;
    std::vector<std::pair<std::string, std::string>> edges;  ///< (u, v): u precedes v

    /// Unique task ids, edges reference known tasks, edge relation acyclic.
    void validate() const;
    std::optional<std::size_t> index_of(const std::string& task_id) const;
    /// Tasks in a dependency-respecting order (Kahn, ties by declaration order).
    std::vector<std::string> topological_order() const;
};

struct Bid {
    std::string id;
    std::string bidder;
    std::vector<std::string> tasks;
    std::map<std::string, econ::QualityVector> quality_offers;
    Amount price = 0;
};

/// bidder -> capability ids it has registered.
using CapabilityIndex = std::map<std::string, std::set<std::string>>;

struct Allocation {
    std::vector<std::string> chosen;  ///< winning bid ids, sorted
    std::map<std::string, std::string> cover;  ///< task -> bid id
    Amount total_price = 0;
};

struct PaymentVector {
    std::map<std::string, Amount> payments;  ///< winning bidder -> payment after capping
    std::map<std::string, Amount> uncapped;  ///< raw VCG payments
    Amount budget = 0;
    bool cap_binding = false;

    Amount total() const;
};

bool validate_bid(const Bid& bid, const WorkflowDag& w, const CapabilityIndex& capabilities);

/// Minimum-price exact cover with total <= budget. Equal-cost covers are
/// broken by the lexicographically smallest sorted list of bid ids.
/// Throws InfeasibleError when no cover exists or the cheapest exceeds budget.
Allocation winner_determination(const WorkflowDag& w, const std::vector<Bid>& bids, Amount budget);

/// Cheapest exact cover ignoring any budget; nullopt when none exists.
std::optional<Allocation> cheapest_cover(const WorkflowDag& w, const std::vector<Bid>& bids);

/// Per-task reserve used when a counterfactual cannot cover a task.
Amount reserve_price(const WorkflowDag& w, Amount budget);

/// Cost of the optimal cover once every bid of `bidder` is removed. Tasks no
/// remaining bid covers are priced at the reserve; if the remaining bids
/// still admit no exact cover, every task gets a reserve singleton.
Amount counterfactual_cost(const WorkflowDag& w, const std::vector<Bid>& bids, const std::string& bidder, Amount budget);

/// VCG payment to winner i = counterfactual_cost(i) - (total - price_i),
/// scaled proportionally (floored) when the sum exceeds the budget.
PaymentVector vcg_payments(const WorkflowDag& w, const std::vector<Bid>& bids, const Allocation& alloc, Amount budget);

struct Deviation {
    std::string bid_id;
    Amount reported_price = 0;
};

struct DeviationOutcome {
    Deviation deviation;
    std::string bidder;
    double truthful_utility = 0.0;
    double deviated_utility = 0.0;
    bool truthful_cap_binding = false;
    bool deviated_cap_binding = false;
    bool profitable() const { return deviated_utility > truthful_utility + 1e-9; }
};

struct ProbeReport {
    bool pass = true;
    std::vector<DeviationOutcome> outcomes;
    std::optional<DeviationOutcome> counterexample;
};

/// Replays each misreport and checks the deviator never strictly gains.
/// `true_costs` maps bid id -> true cost; bids are taken as truthful reports.
/// Utility is payment minus the true cost of winning bids, 0 when losing or
/// when the auction becomes infeasible.
ProbeReport truthfulness_probe(const WorkflowDag& w, const std::vector<Bid>& bids,
                               const std::map<std::string, Amount>& true_costs,
                               const std::vector<Deviation>& deviations, Amount budget);

}  // namespace cpmm::auction
