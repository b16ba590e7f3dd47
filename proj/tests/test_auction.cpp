#include "doctest.h"

#include "auction_oracle.hpp"
#include "cpmm/error.hpp"
#include "cpmm/rng.hpp"

using namespace cpmm::auction;
using cpmm::econ::QualityVector;

namespace {

Bid bid(std::string id, std::string bidder, std::vector<std::string> tasks, Amount price) {
    Bid b{std::move(id), std::move(bidder), std::move(tasks), {}, price};
    for (const auto& t : b.tasks) b.quality_offers.emplace(t, QualityVector({1.0, 1.0}));
    return b;
}

WorkflowDag two_tasks() {
    WorkflowDag w;
    w.tasks = {{"A", "translate", QualityVector({0.5, 0.9})}, {"B", "summarize", QualityVector({0.2, 0.0})}};
    w.edges = {{"A", "B"}};
    return w;
}

}  // namespace

TEST_CASE("workflow validation") {
    auto w = two_tasks();
    CHECK_NOTHROW(w.validate());
    CHECK(w.topological_order() == std::vector<std::string>{"A", "B"});
    w.edges.push_back({"B", "A"});
    CHECK_THROWS_AS(w.validate(), cpmm::ValidationError);
    auto dup = two_tasks();
    dup.tasks[1].id = "A";
    CHECK_THROWS_AS(dup.validate(), cpmm::ValidationError);
}

TEST_CASE("validate_bid") {
    auto w = two_tasks();
    CapabilityIndex caps{{"alice", {"translate", "summarize"}}, {"bob", {"summarize"}}};
    CHECK_FALSE(validate_bid(bid("x", "alice", {"Z"}, 3), w, caps));

    Bid exact{"e", "alice", {"A"}, {{"A", QualityVector({0.5, 0.9})}}, 3};
    CHECK(validate_bid(exact, w, caps));

    Bid low{"l", "alice", {"A"}, {{"A", QualityVector({0.4, 0.95})}}, 3};
    CHECK_FALSE(validate_bid(low, w, caps));

    CHECK_FALSE(validate_bid(bid("c", "bob", {"A"}, 3), w, caps));
    CHECK(validate_bid(bid("d", "bob", {"B"}, 3), w, caps));
    CHECK_FALSE(validate_bid(bid("n", "alice", {"A"}, -1), w, caps));
    Bid mismatched{"m", "alice", {"A", "B"}, {{"A", QualityVector({1.0, 1.0})}}, 3};
    CHECK_FALSE(validate_bid(mismatched, w, caps));
}

TEST_CASE("winner determination examples") {
    auto w = two_tasks();
    auto one = winner_determination(w, {bid("all", "a", {"A", "B"}, 9)}, 10);
    CHECK(one.chosen == std::vector<std::string>{"all"});
    CHECK(one.total_price == 9);
    CHECK(one.cover.at("A") == "all");

    std::vector<Bid> bids{bid("a3", "p", {"A"}, 3), bid("a5", "q", {"A"}, 5), bid("b4", "r", {"B"}, 4),
                          bid("ab6", "s", {"A", "B"}, 6)};
    auto best = winner_determination(w, bids, 100);
    CHECK(best.chosen == std::vector<std::string>{"ab6"});
    CHECK(best.total_price == 6);

    CHECK_THROWS_AS(winner_determination(w, {bid("a3", "p", {"A"}, 3)}, 100), cpmm::InfeasibleError);
    CHECK_THROWS_AS(winner_determination(w, bids, 5), cpmm::InfeasibleError);
}

TEST_CASE("ties break lexicographically by sorted bid ids") {
    auto w = two_tasks();
    std::vector<Bid> bids{bid("z", "p", {"A", "B"}, 7), bid("m", "q", {"A"}, 3), bid("n", "r", {"B"}, 4)};
    CHECK(winner_determination(w, bids, 100).chosen == std::vector<std::string>{"m", "n"});
}

TEST_CASE("VCG payment examples") {
    WorkflowDag single;
    single.tasks = {{"A", "c", QualityVector({0.0})}};
    std::vector<Bid> sb{bid("b3", "x", {"A"}, 3), bid("b5", "y", {"A"}, 5)};
    for (auto& b : sb) b.quality_offers = {{"A", QualityVector({1.0})}};
    auto alloc = winner_determination(single, sb, 100);
    auto pv = vcg_payments(single, sb, alloc, 100);
    CHECK(pv.payments.at("x") == 5);
    CHECK_FALSE(pv.cap_binding);

    auto w = two_tasks();
    std::vector<Bid> bids{bid("a3", "x", {"A"}, 3), bid("a5", "y", {"A"}, 5), bid("b4", "z", {"B"}, 4),
                          bid("b6", "u", {"B"}, 6)};
    auto a2 = winner_determination(w, bids, 100);
    auto p2 = vcg_payments(w, bids, a2, 100);
    CHECK(p2.payments.at("x") == 5);
    CHECK(p2.payments.at("z") == 6);

    // Sole bidder on B: counterfactual prices B at reserve 20/2 = 10.
    std::vector<Bid> sole{bid("a3", "x", {"A"}, 3), bid("a5", "y", {"A"}, 5), bid("b4", "z", {"B"}, 4)};
    auto a3 = winner_determination(w, sole, 20);
    auto p3 = vcg_payments(w, sole, a3, 20);
    CHECK(reserve_price(w, 20) == 10);
    CHECK(p3.payments.at("z") == 10);
    CHECK(p3.payments.at("x") == 5);

    // Budget 8: reserve 4, raw payments {x:5, z:4} sum 9 > 8, scaled by 8/9 and floored.
    auto p4 = vcg_payments(w, sole, winner_determination(w, sole, 8), 8);
    CHECK(p4.cap_binding);
    CHECK(p4.uncapped.at("x") == 5);
    CHECK(p4.uncapped.at("z") == 4);
    CHECK(p4.payments.at("x") == 4);
    CHECK(p4.payments.at("z") == 3);
    CHECK(p4.total() <= 8);
}

TEST_CASE("truthfulness probe") {
    WorkflowDag single;
    single.tasks = {{"A", "c", QualityVector({0.0})}};
    std::vector<Bid> sb{bid("b3", "x", {"A"}, 3), bid("b5", "y", {"A"}, 5)};
    std::map<std::string, Amount> costs{{"b3", 3}, {"b5", 5}};
    CHECK(truthfulness_probe(single, sb, costs, {}, 100).pass);

    std::vector<Deviation> devs;
    for (Amount p = 0; p <= 8; ++p) {
        devs.push_back({"b5", p});
        devs.push_back({"b3", p});
    }
    auto report = truthfulness_probe(single, sb, costs, devs, 100);
    CHECK(report.pass);
    // loser undercutting to 2 wins but is paid 3 < cost 5
    auto it = std::find_if(report.outcomes.begin(), report.outcomes.end(),
                           [](const DeviationOutcome& o) { return o.deviation.bid_id == "b5" && o.deviation.reported_price == 2; });
    REQUIRE(it != report.outcomes.end());
    CHECK(it->deviated_utility == doctest::Approx(-2.0));
}

TEST_CASE("budget cap can create profitable misreports") {
    // Exhaustive search over a tiny grid finds a capped instance where a
    // misreport pays off; the cap rule trades truthfulness for feasibility.
    bool found = false;
    auto w = oracle::make_dag(2);
    for (Amount budget : {6, 7, 8, 9, 10}) {
        for (Amount pa = 1; pa <= 5 && !found; ++pa)
            for (Amount pb = 1; pb <= 5 && !found; ++pb)
                for (Amount pc = 1; pc <= 5 && !found; ++pc) {
                    auto bids = oracle::to_bids(2, {{1u, pa, "x", "b0"}, {1u, pc, "y", "b1"}, {2u, pb, "z", "b2"}});
                    std::map<std::string, Amount> costs{{"b0", pa}, {"b1", pc}, {"b2", pb}};
                    std::vector<Deviation> devs;
                    for (const auto& b : bids)
                        for (Amount d = 1; d <= 5; ++d) devs.push_back({b.id, d});
                    try {
                        auto r = truthfulness_probe(w, bids, costs, devs, budget);
                        if (!r.pass && r.counterexample->truthful_cap_binding) found = true;
                    } catch (const cpmm::InfeasibleError&) {
                    }
                }
    }
    CHECK(found);
}

TEST_CASE("random instances agree with brute-force enumeration") {
    auto rng = cpmm::make_stream(21, "auction-props");
    int checked = 0;
    for (int trial = 0; trial < 400; ++trial) {
        int tasks = 1 + static_cast<int>(cpmm::uniform_index(rng, 4));
        int nb = 1 + static_cast<int>(cpmm::uniform_index(rng, 8));
        std::vector<oracle::RawBid> raw;
        for (int i = 0; i < nb; ++i) {
            auto mask = static_cast<std::uint32_t>(1 + cpmm::uniform_index(rng, (1u << tasks) - 1));
            raw.push_back({mask, 1 + static_cast<std::int64_t>(cpmm::uniform_index(rng, 5)),
                           "p" + std::to_string(cpmm::uniform_index(rng, 5)), "b" + std::to_string(i)});
        }
        std::int64_t budget = 5 + static_cast<std::int64_t>(cpmm::uniform_index(rng, 20));
        auto w = oracle::make_dag(tasks);
        auto bids = oracle::to_bids(tasks, raw);
        auto expect = oracle::brute_cover(tasks, raw);
        if (!expect || expect->cost > budget) {
            CHECK_THROWS_AS(winner_determination(w, bids, budget), cpmm::InfeasibleError);
            continue;
        }
        auto got = winner_determination(w, bids, budget);
        CHECK(got.total_price == expect->cost);
        CHECK(got.chosen == expect->ids);
        auto pv = vcg_payments(w, bids, got, budget);
        auto ov = oracle::brute_vcg(tasks, raw, *expect, budget);
        CHECK(pv.payments == ov.capped);
        CHECK(pv.total() <= budget);
        std::set<std::string> covered;
        for (const auto& [t, b] : got.cover) covered.insert(t);
        CHECK(covered.size() == static_cast<std::size_t>(tasks));
        ++checked;
    }
    CHECK(checked > 100);
}
