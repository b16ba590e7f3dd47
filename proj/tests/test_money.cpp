#include "doctest.h"

#include "cpmm/error.hpp"
#include "cpmm/money.hpp"
#include "cpmm/rng.hpp"

using cpmm::Money;

TEST_CASE("decimal parsing and emission") {
    CHECK(Money::parse("1", 3).to_string() == "1.000");
    CHECK(Money::parse("0.001", 3).minor == 1);
    CHECK(Money::parse("+0.15", 3).minor == 150);
    CHECK(Money::parse("-3.5", 2).to_string() == "-3.50");
    CHECK(Money::parse_exact("97.30").precision == 2);
    CHECK(Money::from_minor(0, 0).to_string() == "0");
    CHECK(Money::from_minor(-1, 3).to_string() == "-0.001");
    CHECK(Money::from_minor(150, 3).to_signed_string() == "+0.150");

    CHECK_THROWS_AS(Money::parse("0.0001", 3), cpmm::ParseError);
    CHECK_THROWS_AS(Money::parse("1e3", 3), cpmm::ParseError);
    CHECK_THROWS_AS(Money::parse(".5", 3), cpmm::ParseError);
    CHECK_THROWS_AS(Money::parse("1.", 3), cpmm::ParseError);
    CHECK_THROWS_AS(Money::parse("", 3), cpmm::ParseError);
}

TEST_CASE("round half even") {
    CHECK(cpmm::round_half_even(2.5) == 2);
    CHECK(cpmm::round_half_even(3.5) == 4);
    CHECK(cpmm::round_half_even(-2.5) == -2);
    CHECK(cpmm::round_half_even(2.4999) == 2);
    CHECK(cpmm::div_round_half_even(5, 2) == 2);
    CHECK(cpmm::div_round_half_even(7, 2) == 4);
    CHECK(cpmm::div_round_half_even(-5, 2) == -2);
    CHECK(cpmm::div_round_half_even(10, 3) == 3);
    CHECK(Money::from_double(0.0125, 3).minor == 12);
}

TEST_CASE("arithmetic requires matching precision") {
    auto a = Money::parse("1.000", 3);
    auto b = Money::parse("0.15", 2);
    CHECK_THROWS_AS(a + b, cpmm::ValidationError);
    CHECK((a + b.rescaled(3)).to_string() == "1.150");
    CHECK(b < a);
}

TEST_CASE("parse(to_string(x)) is the identity") {
    auto rng = cpmm::make_stream(7, "money");
    for (int i = 0; i < 1000; ++i) {
        int precision = static_cast<int>(cpmm::uniform_index(rng, 7));
        auto minor = static_cast<std::int64_t>(rng() % 2000000001ULL) - 1000000000;
        Money m = Money::from_minor(minor, precision);
        CHECK(Money::parse(m.to_string(), precision) == m);
    }
}
