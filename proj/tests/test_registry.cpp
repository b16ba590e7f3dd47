#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "cpmm/error.hpp"
#include "cpmm/registry.hpp"

using namespace cpmm::registry;
using cpmm::Money;

namespace {

CapabilityAdvert scheduling(double latency = 0.9, double accuracy = 0.8) {
    CapabilityAdvert c;
    c.capability_id = "ScheduleManagement";
    c.quality = {{"latency", latency}, {"accuracy", accuracy}};
    c.base_price = Money::parse("0.003", 3);
    c.payment_methods = {"H402", "X402"};
    c.sensitivity = {{"quality.latency", 0}, {"quality.accuracy", 1}, {"base_price", 2}, {"payment_methods", 3}};
    return c;
}

RegistryEntry entry(std::string id, double sigma, CapabilityAdvert c = scheduling()) {
    return RegistryEntry{std::move(id), {std::move(c)}, sigma, cpmm::acnbp::ExtensionManifest::cpmm_default(), "ans://" + std::string("x")};
}

DiscoveryQuery full_query() {
    DiscoveryQuery q;
    q.capability_id = "ScheduleManagement";
    q.min_quality = {{"latency", 0.5}, {"accuracy", 0.5}};
    q.max_base_price = Money::parse("0.005", 3);
    q.required_methods = {"H402"};
    return q;
}

double chi_square(const std::vector<int>& counts, const std::vector<double>& probs, int n) {
    double chi = 0.0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        const double expected = probs[j] * n;
        chi += (counts[j] - expected) * (counts[j] - expected) / expected;
    }
    return chi;
}

}  // namespace

TEST_CASE("selective disclosure prefix") {
    auto c = scheduling();
    CHECK(disclose(c, 1.0).quality.size() == 2);
    CHECK(disclose(c, 1.0).base_price);
    CHECK(disclose(c, 1.0).payment_methods);

    auto none = disclose(c, 0.0);
    CHECK(none.capability_id == "ScheduleManagement");
    CHECK(none.quality.empty());
    CHECK_FALSE(none.base_price);
    CHECK_FALSE(none.payment_methods);

    auto half = disclose(c, 0.5);
    CHECK(half.quality == std::map<std::string, double>{{"latency", 0.9}, {"accuracy", 0.8}});
    CHECK_FALSE(half.base_price);

    CHECK(disclosed_count(0.5, 4) == 2);
    CHECK(disclosed_count(0.26, 4) == 2);
    CHECK(disclosed_count(0.25, 4) == 1);
    CHECK(disclosed_count(0.01, 4) == 1);
    CHECK(disclosed_count(0.0, 4) == 0);
    CHECK(disclosed_count(0.3, 10) == 3);
    CHECK_THROWS_AS(disclosed_count(1.5, 4), cpmm::ValidationError);
    // Oracle: ceil(sigma * n) by exact rational arithmetic on k/100 grid.
    for (int n = 0; n <= 12; ++n)
        for (int k = 0; k <= 100; ++k) CHECK(disclosed_count(k / 100.0, n) == static_cast<std::size_t>((k * n + 99) / 100));
}

TEST_CASE("registration and discovery") {
    Registry r;
    CHECK(r.discover(full_query()).empty());
    r.register_agent(entry("b-agent", 1.0));
    r.register_agent(entry("a-agent", 1.0));
    r.register_agent(entry("private", 0.0));
    CHECK_THROWS_AS(r.register_agent(entry("a-agent", 1.0)), cpmm::ValidationError);
    CHECK_THROWS_AS(r.register_agent(entry("bad", 1.2)), cpmm::ValidationError);

    auto found = r.discover(full_query());
    REQUIRE(found.size() == 2);
    CHECK(found[0].agent_id == "a-agent");
    CHECK(found[1].agent_id == "b-agent");

    DiscoveryQuery id_only;
    id_only.capability_id = "ScheduleManagement";
    CHECK(r.discover(id_only).size() == 3);

    auto q = full_query();
    q.min_quality["latency"] = 0.95;
    CHECK(r.discover(q).empty());
    q = full_query();
    q.max_base_price = Money::parse("0.002", 3);
    CHECK(r.discover(q).empty());
    q = full_query();
    q.required_methods = {"lightning"};
    CHECK(r.discover(q).empty());
    q = full_query();
    q.min_quality["latency"] = 2.0;
    CHECK_THROWS_AS(r.discover(q), cpmm::ValidationError);
}

TEST_CASE("more disclosure never removes a match") {
    auto rng = cpmm::make_stream(5, "registry-monotone");
    const std::vector<std::string> keys{"quality.latency", "quality.accuracy", "base_price", "payment_methods"};
    for (int trial = 0; trial < 500; ++trial) {
        auto c = scheduling(cpmm::uniform01(rng), cpmm::uniform01(rng));
        c.base_price = Money::from_minor(static_cast<std::int64_t>(cpmm::uniform_index(rng, 10)), 3);
        for (const auto& k : keys) c.sensitivity[k] = static_cast<int>(cpmm::uniform_index(rng, 4));
        DiscoveryQuery q;
        q.capability_id = c.capability_id;
        if (cpmm::uniform_index(rng, 2)) q.min_quality["latency"] = cpmm::uniform01(rng);
        if (cpmm::uniform_index(rng, 2)) q.min_quality["accuracy"] = cpmm::uniform01(rng);
        if (cpmm::uniform_index(rng, 2)) q.max_base_price = Money::from_minor(static_cast<std::int64_t>(cpmm::uniform_index(rng, 10)), 3);
        if (cpmm::uniform_index(rng, 2)) q.required_methods = {"H402"};
        bool matched_before = false;
        for (int k = 0; k <= 20; ++k) {
            const double sigma = k / 20.0;
            const auto view = disclose(c, sigma);
            const bool matched = satisfies(view, q);
            CHECK(!(matched_before && !matched));
            matched_before = matched;
            auto wider = disclose(c, std::min(1.0, sigma + 0.05));
            for (const auto& [dim, v] : view.quality) CHECK(wider.quality.count(dim));
        }
    }
}

TEST_CASE("snapshot round trip is deterministic") {
    Registry r;
    r.register_agent(entry("a", 0.5));
    auto legacy = entry("b", 0.75);
    legacy.manifest = cpmm::acnbp::ExtensionManifest::legacy();
    r.register_agent(legacy);
    auto j = r.to_json();
    auto back = Registry::from_json(Json::parse(cpmm::payload::canonical_serialize(j)));
    CHECK(cpmm::payload::canonical_serialize(back.to_json()) == cpmm::payload::canonical_serialize(j));
    CHECK(back.find("b")->manifest == cpmm::acnbp::ExtensionManifest::legacy());
    CHECK(back.find("a")->capabilities[0].base_price == Money::parse("0.003", 3));
}

TEST_CASE("matching modes") {
    std::vector<MatchSeller> sellers{{"s0", {"A"}, 0}, {"s1", {"B"}, 0}, {"s2", {"A", "B"}, 0}, {"s3", {"C"}, 0},
                                     {"s4", {"A"}, 0}};
    MatchBuyer buyer{"b", "B", {}};
    const int draws = 10000;

    SUBCASE("random is uniform") {
        MatchConfig cfg{MatchMode::Random};
        auto p = matching_probabilities(cfg, buyer, sellers, 1);
        for (double x : p) CHECK(x == doctest::Approx(0.2));
        auto rng = cpmm::make_stream(1, "chi");
        std::vector<int> counts(5, 0);
        for (int i = 0; i < draws; ++i) ++counts[*match(cfg, {buyer}, sellers, rng, i + 1)[0]];
        // 99.9% quantile of chi-square with 4 degrees of freedom.
        CHECK(chi_square(counts, p, draws) < 18.47);
    }
    SUBCASE("capability mode draws only compatible sellers") {
        MatchConfig cfg{MatchMode::Capability};
        auto p = matching_probabilities(cfg, buyer, sellers, 1);
        CHECK(p == std::vector<double>{0, 0.5, 0.5, 0, 0});
        MatchBuyer c{"c", "C", {}};
        auto rng = cpmm::make_stream(2, "cap");
        for (int i = 0; i < 100; ++i) CHECK(match(cfg, {c}, sellers, rng, 1)[0] == 3u);
        MatchBuyer none{"n", "Z", {}};
        CHECK_FALSE(match(cfg, {none}, sellers, rng, 1)[0]);
    }
    SUBCASE("preference mode") {
        MatchConfig cfg{MatchMode::Preference};
        auto p = matching_probabilities(cfg, buyer, sellers, 1);
        for (double x : p) CHECK(x == doctest::Approx(0.2));
        sellers[2].reputation = 3.0;
        buyer.affinity["s0"] = 1.0;
        p = matching_probabilities(cfg, buyer, sellers, 1);
        const double z = std::exp(1.0) + std::exp(3.0) + 3.0;
        CHECK(p[0] == doctest::Approx(std::exp(1.0) / z));
        CHECK(p[2] == doctest::Approx(std::exp(3.0) / z));
        auto rng = cpmm::make_stream(3, "pref");
        std::vector<int> counts(5, 0);
        for (int i = 0; i < draws; ++i) ++counts[*match(cfg, {buyer}, sellers, rng, 1)[0]];
        CHECK(chi_square(counts, p, draws) < 18.47);

        sellers[2].reputation = 50.0;
        cfg.exploration_c = 0.5;
        for (std::int64_t t : {1, 2, 10, 100, 1000}) {
            auto q = matching_probabilities(cfg, buyer, sellers, t);
            for (double x : q) CHECK(x >= std::min(0.5 / static_cast<double>(t), 0.2) - 1e-12);
        }
    }
    SUBCASE("determinism and errors") {
        MatchConfig cfg{MatchMode::Preference};
        auto r1 = cpmm::make_stream(9, "m");
        auto r2 = cpmm::make_stream(9, "m");
        std::vector<MatchBuyer> buyers(20, buyer);
        CHECK(match(cfg, buyers, sellers, r1, 4) == match(cfg, buyers, sellers, r2, 4));
        CHECK_THROWS_AS(match(cfg, {}, sellers, r1, 1), cpmm::ValidationError);
        CHECK_THROWS_AS(match_mode_from_string("auction"), cpmm::ValidationError);
    }
}
