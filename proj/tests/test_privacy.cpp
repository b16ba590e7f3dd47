#include "doctest.h"

#include <cmath>

#include "cpmm/error.hpp"
#include "cpmm/privacy.hpp"
#include "cpmm/rng.hpp"

using namespace cpmm::privacy;

namespace {

// Independent closed forms for the residual oracle.
double foc(double g, double a, double b, double d, double s) {
    return b / ((1 + d * s) * (1 + d * s)) - g * a * std::pow(s, a - 1);
}

}  // namespace

TEST_CASE("cost and value curves") {
    PrivacyParams c{1.0, 2.0};
    CHECK(privacy_cost(c, 0.0) == 0.0);
    CHECK(privacy_cost(c, 1.0) == 1.0);
    CHECK(privacy_cost({2.0, 2.0}, 0.5) == doctest::Approx(0.5));
    CHECK(market_value({2.0, 1.0}, 1.0) == doctest::Approx(1.0));
    CHECK(market_value({3.0, 0.0}, 0.4) == doctest::Approx(1.2));
    CHECK(market_value({3.0, 0.0}, 0.0) == 0.0);
    CHECK_THROWS_AS(privacy_cost(c, 1.1), cpmm::ValidationError);
    CHECK_THROWS_AS(market_value({1, 0}, -0.1), cpmm::ValidationError);
    CHECK_THROWS_AS(privacy_cost({0.0, 2.0}, 0.5), cpmm::ValidationError);
    CHECK_THROWS_AS(privacy_cost({1.0, 1.0}, 0.5), cpmm::ValidationError);
    CHECK_THROWS_AS(market_value({-1.0, 0.0}, 0.5), cpmm::ValidationError);
}

TEST_CASE("optimal disclosure hand cases") {
    CHECK(optimal_disclosure({1, 2}, {1, 0}) == doctest::Approx(0.5).epsilon(1e-9));
    // Oracle: 2/(1+s)^2 = 2s  <=>  s^3 + 2s^2 + s - 1 = 0, solved by Newton.
    double s = 0.5;
    for (int i = 0; i < 50; ++i) s -= (s * s * s + 2 * s * s + s - 1) / (3 * s * s + 4 * s + 1);
    const double got = optimal_disclosure({1, 2}, {2, 1});
    CHECK(std::abs(got - s) <= 1e-6);
    CHECK(std::abs(got - 0.4656) <= 1e-4);
    CHECK(optimal_disclosure({1, 2}, {0, 1}) == 0.0);
    CHECK(optimal_disclosure({0.1, 2}, {5, 0}) == 1.0);
}

TEST_CASE("unique disclosure optimum on random parameters") {
    auto rng = cpmm::make_stream(11, "privacy-draws");
    int interior = 0;
    for (int draw = 0; draw < 1000; ++draw) {
        const double g = 0.1 + 4.9 * cpmm::uniform01(rng);
        const double a = 1.05 + 2.95 * cpmm::uniform01(rng);
        const double b = 0.01 + 4.99 * cpmm::uniform01(rng);
        const double d = 3.0 * cpmm::uniform01(rng);
        const double star = optimal_disclosure({g, a}, {b, d});
        int changes = 0;
        double prev = foc(g, a, b, d, 0.0);
        for (int i = 1; i <= 10000; ++i) {
            const double cur = foc(g, a, b, d, i / 10000.0);
            if ((prev > 0) != (cur > 0)) ++changes;
            prev = cur;
        }
        if (star < 1.0) {
            ++interior;
            CHECK(changes == 1);
            CHECK(std::abs(foc(g, a, b, d, star)) <= 1e-8);
        } else {
            CHECK(changes == 0);
            CHECK(foc(g, a, b, d, 1.0) >= 0.0);
        }
    }
    CHECK(interior > 500);
}

TEST_CASE("comparative statics") {
    for (double a : {1.5, 2.0, 3.0})
        for (double d : {0.0, 0.5, 2.0}) {
            double last = 2.0;
            for (double g = 0.2; g <= 5.0; g += 0.2) {
                const double s = optimal_disclosure({g, a}, {1.5, d});
                CHECK(s <= last + 1e-9);
                last = s;
            }
            last = -1.0;
            for (double b = 0.0; b <= 5.0; b += 0.2) {
                const double s = optimal_disclosure({1.0, a}, {b, d});
                CHECK(s >= last - 1e-9);
                last = s;
            }
        }
}

TEST_CASE("privacy elasticity") {
    CHECK(privacy_elasticity([](double) { return 3.0; }, 0.4) == doctest::Approx(0.0));
    auto power = [](double s) { return 2.0 * std::pow(s, -0.3); };
    for (double s : {0.1, 0.5, 0.9, 0.999999}) CHECK(std::abs(privacy_elasticity(power, s) + 0.3) <= 1e-4);
    auto smooth = [](double s) { return 1.0 + s; };
    CHECK(std::abs(privacy_elasticity(smooth, 1e-7)) < 1e-6);
    CHECK(privacy_elasticity(smooth, 0.0) == 0.0);
    CHECK(privacy_elasticity(smooth, 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(privacy_elasticity([](double) { return 0.0; }, 0.5), cpmm::ValidationError);
}

TEST_CASE("privacy-utility frontier") {
    auto utility = [](double s, double theta) { return theta * s - s * s; };
    auto privacy = [](double s) { return 1.0 - s; };
    const double theta = 1.2;
    const auto curve = frontier(utility, privacy, theta, 101);
    REQUIRE(curve.size() == 101);
    CHECK(curve.front().privacy == doctest::Approx(0.0));
    CHECK(curve.front().utility == doctest::Approx(0.36));
    CHECK(curve.back().privacy == doctest::Approx(1.0));
    CHECK(curve.back().utility == doctest::Approx(utility(0.0, theta)));
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].privacy >= curve[i - 1].privacy);
        CHECK(curve[i].utility <= curve[i - 1].utility + 1e-12);
    }
    for (std::size_t i = 1; i + 1 < curve.size(); ++i)
        CHECK(curve[i - 1].utility - 2 * curve[i].utility + curve[i + 1].utility <= 1e-9);

    // Dense oracle: brute force over a 10x grid at the same privacy floors.
    for (const auto& pt : curve) {
        double best = -1e300;
        for (int j = 0; j <= 1000; ++j) {
            const double s = j / 1000.0;
            if (privacy(s) >= pt.privacy - 1e-12) best = std::max(best, utility(s, theta));
        }
        CHECK(best >= pt.utility - 1e-12);
        CHECK(best - pt.utility <= 1e-4);
    }

    auto flat = frontier(utility, [](double s) { return s < 0.5 ? 1.0 : 0.0; }, theta, 11);
    CHECK(flat.back().utility == doctest::Approx(utility(0.4, theta)));
    CHECK_THROWS_AS(frontier(utility, [](double s) { return s; }, theta, 11), cpmm::ValidationError);
    CHECK_THROWS_AS(frontier(utility, privacy, theta, 2), cpmm::ValidationError);
}

TEST_CASE("threshold policy") {
    auto threshold = [](double p) { return 0.5 + p; };
    CHECK(threshold_policy(1.0, 0.2, threshold) == Direction::Increase);
    CHECK(threshold_policy(0.6, 0.2, threshold) == Direction::Decrease);
    CHECK(threshold_policy(0.75, 0.25, threshold) == Direction::Hold);
    CHECK(to_string(Direction::Hold) == "hold");
}
