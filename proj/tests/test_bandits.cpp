#include "doctest.h"

#include <cmath>

#include "cpmm/bandits.hpp"
#include "cpmm/rng.hpp"

using namespace cpmm::bandit;

TEST_CASE("ucb_select cold start and index") {
    UcbState s(2);
    CHECK(ucb_select(s) == 0);

    s.arm_counts = {1, 1};
    s.arm_means = {1.0, 0.0};
    s.t = 2;
    CHECK(ucb_select(s) == 0);

    // mean 0.5 on both; bonus sqrt(2 ln 5 / n): 1.794 for n=1 vs 1.036 for n=3
    s.arm_counts = {1, 3};
    s.arm_means = {0.5, 0.5};
    s.t = 4;
    double i0 = 0.5 + std::sqrt(2.0 * std::log(5.0) / 1.0);
    double i1 = 0.5 + std::sqrt(2.0 * std::log(5.0) / 3.0);
    REQUIRE(i0 > i1);
    CHECK(ucb_select(s) == 0);

    UcbState partial(3);
    partial.arm_counts = {4, 0, 0};
    partial.t = 4;
    CHECK(ucb_select(partial) == 1);
}

TEST_CASE("ucb_update incremental mean") {
    UcbState s(2, {0.0, 2.0});
    s = ucb_update(s, 0, 1.0);
    CHECK(s.arm_means[0] == 1.0);
    CHECK(s.arm_counts[0] == 1);
    s.arm_means[1] = 0.5;
    s.arm_counts[1] = 1;
    s = ucb_update(s, 1, 1.5);
    CHECK(s.arm_means[1] == doctest::Approx(1.0));
    CHECK(s.arm_counts[1] == 2);
    CHECK(s.arm_counts[0] == 1);

    UcbState c(1, {0.0, 1.0});
    for (int i = 0; i < 50; ++i) c = ucb_update(c, 0, 0.3);
    CHECK(c.arm_means[0] == doctest::Approx(0.3));

    CHECK_THROWS_AS(ucb_update(c, 0, 1.5), cpmm::ValidationError);
    CHECK_THROWS_AS(ucb_update(c, 3, 0.5), cpmm::ValidationError);
}

TEST_CASE("exploration guarantee: every arm pulled once after K steps") {
    for (std::size_t k = 1; k <= 8; ++k) {
        UcbState s(k);
        for (std::size_t t = 0; t < k; ++t) s = ucb_update(s, ucb_select(s), 0.7);
        for (auto n : s.arm_counts) CHECK(n >= 1);
        CHECK(s.t == static_cast<long>(k));
    }
}

TEST_CASE("cumulative regret") {
    CHECK(cumulative_regret({{0, 1.0}, {0, 1.0}}, 1.0) == 0.0);
    CHECK(cumulative_regret({{1, 0.0}}, 1.0) == 1.0);
}

TEST_CASE("linucb closed forms") {
    LinUcbState<double> s(3, 1.0);
    Vector<double> e1 = Vector<double>::Unit(3, 0);
    CHECK(linucb_price(s, e1) == doctest::Approx(1.0));
    CHECK(linucb_price(s, Vector<double>::Zero(3)) == 0.0);

    auto rng = cpmm::make_stream(3, "linucb-closed");
    LinUcbState<double> a(4, 0.7);
    for (int i = 0; i < 100; ++i) {
        Vector<double> x(4);
        for (int j = 0; j < 4; ++j) x(j) = cpmm::uniform01(rng) * 2.0 - 1.0;
        CHECK(std::abs(linucb_index(a, x) - 0.7 * x.norm()) <= 1e-9);
    }

    for (double alpha : {0.5, 1.0, 2.0}) {
        LinUcbState<double> u(3, alpha);
        u = linucb_update(u, e1, 1.0);
        CHECK(u.design(0, 0) == 2.0);
        CHECK(u.design(1, 1) == 1.0);
        CHECK(linucb_price(u, e1) == doctest::Approx(0.5 + alpha / std::sqrt(2.0)));
    }

    LinUcbState<double> capped(2, 1.0, 0.5);
    CHECK(linucb_price(capped, Vector<double>::Ones(2)) == 0.5);
    LinUcbState<double> neg(1, 0.1);
    neg = linucb_update(neg, Vector<double>::Ones(1), -5.0);
    CHECK(linucb_price(neg, Vector<double>::Ones(1)) == 0.0);
}

TEST_CASE("linucb update properties") {
    LinUcbState<double> s(3);
    auto same = linucb_update(s, Vector<double>::Zero(3), 4.0);
    CHECK(same.design == s.design);
    CHECK(same.response == s.response);

    Vector<double> x(3), y(3);
    x << 1, 2, 3;
    y << -1, 0.5, 2;
    auto xy = linucb_update(linucb_update(s, x, 1.0), y, 2.0);
    auto yx = linucb_update(linucb_update(s, y, 2.0), x, 1.0);
    CHECK(xy.design.isApprox(yx.design));

    CHECK_THROWS_AS(linucb_update(s, Vector<double>::Zero(2), 1.0), cpmm::DimensionError);
    Vector<double> bad = Vector<double>::Zero(3);
    bad(1) = std::nan("");
    CHECK_THROWS_AS(linucb_update(s, bad, 1.0), cpmm::ValidationError);
    CHECK_THROWS_AS(linucb_update(s, x, std::nan("")), cpmm::ValidationError);
    CHECK_THROWS_AS(linucb_price(s, Vector<double>::Zero(2)), cpmm::DimensionError);
}

TEST_CASE("positive definiteness survives arbitrary updates") {
    auto rng = cpmm::make_stream(5, "linucb-pd");
    LinUcbState<double> s(5);
    for (int i = 0; i < 2000; ++i) {
        Vector<double> x(5);
        for (int j = 0; j < 5; ++j) x(j) = (cpmm::uniform01(rng) - 0.5) * 100.0;
        s = linucb_update(s, x, cpmm::uniform01(rng));
        if (i % 100 == 0) {
            Eigen::LLT<Matrix<double>> llt(s.design);
            CHECK(llt.info() == Eigen::Success);
            CHECK(s.design.isApprox(s.design.transpose()));
        }
    }
}

TEST_CASE("linucb works in single precision too") {
    LinUcbState<float> s(2, 1.0f);
    Eigen::Vector2f x(1.0f, 0.0f);
    s = linucb_update(s, x, 1.0f);
    CHECK(linucb_price(s, x) == doctest::Approx(0.5f + 1.0f / std::sqrt(2.0f)));
}

TEST_CASE("short UCB run concentrates on the best arm") {
    auto run = simulate_ucb_bernoulli({0.9, 0.5}, 2000, 1);
    CHECK(run.pulls[0] > run.pulls[1]);
    auto lin = simulate_linucb_linear(Vector<double>::Unit(3, 1), 2000, 10, 0.1, 1.0, 1);
    CHECK(lin.theta_error < 0.2);
}
