#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace cpmm {

/// Fixed-point amount in integer minor units. `precision` is the number of
/// fraction digits of the currency (USD at precision 3 counts mills).
struct Money {
    std::int64_t minor = 0;
    int precision = 0;

    static Money from_minor(std::int64_t minor, int precision) { return {minor, precision}; }

    /// Parses "12", "0.001", "-3.50", "+0.15". Fails on exponent forms, empty
    /// fraction, or more fraction digits than `precision`.
    static Money parse(std::string_view text, int precision);

    /// Parses and infers precision from the number of fraction digits.
    static Money parse_exact(std::string_view text);

    /// Nearest representable amount, ties to even.
    static Money from_double(double value, int precision);

    double to_double() const;
    std::string to_string() const;
    /// Same as to_string() but keeps an explicit '+' for non-negative values.
    std::string to_signed_string() const;

    Money rescaled(int new_precision) const;

    Money operator+(const Money& o) const;
    Money operator-(const Money& o) const;
    Money& operator+=(const Money& o) { return *this = *this + o; }
    Money& operator-=(const Money& o) { return *this = *this - o; }

    bool operator==(const Money& o) const { return minor == o.minor && precision == o.precision; }
    std::strong_ordering operator<=>(const Money& o) const;
};

/// Round-half-even of a real number to the nearest integer.
std::int64_t round_half_even(double value);

/// Round-half-even of numerator / denominator for integers (denominator > 0).
std::int64_t div_round_half_even(std::int64_t numerator, std::int64_t denominator);

std::int64_t pow10(int exponent);

}  // namespace cpmm
