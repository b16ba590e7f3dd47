#include "cpmm/money.hpp"

#include <cmath>
#include <limits>

#include "cpmm/error.hpp"

namespace cpmm {

std::int64_t pow10(int exponent) {
    if (exponent < 0 || exponent > 18) throw ValidationError("precision out of range: " + std::to_string(exponent));
    std::int64_t r = 1;
    for (int i = 0; i < exponent; ++i) r *= 10;
    return r;
}

std::int64_t round_half_even(double value) {
    if (!std::isfinite(value)) throw ValidationError("non-finite amount");
    double floor_v = std::floor(value);
    double diff = value - floor_v;
    auto f = static_cast<std::int64_t>(floor_v);
    if (diff > 0.5) return f + 1;
    if (diff < 0.5) return f;
    return (f % 2 == 0) ? f : f + 1;
}

std::int64_t div_round_half_even(std::int64_t numerator, std::int64_t denominator) {
    if (denominator <= 0) throw ValidationError("non-positive denominator");
    std::int64_t q = numerator / denominator;
    std::int64_t r = numerator % denominator;
    if (r < 0) {
        r += denominator;
        q -= 1;
    }
    // Compare 2r with the denominator without overflow.
    if (r > denominator - r) return q + 1;
    if (r < denominator - r) return q;
    return (q % 2 == 0) ? q : q + 1;
}

namespace {

Money parse_impl(std::string_view text, int precision, bool infer) {
    const std::string where = "amount";
    if (text.empty()) throw ParseError(where, "empty decimal");
    bool negative = false;
    std::size_t i = 0;
    if (text[0] == '+' || text[0] == '-') {
        negative = text[0] == '-';
        i = 1;
    }
    std::int64_t int_part = 0;
    std::size_t int_digits = 0;
    for (; i < text.size() && text[i] != '.'; ++i) {
        char c = text[i];
        if (c < '0' || c > '9') throw ParseError(where, "bad decimal '" + std::string(text) + "'");
        if (int_part > (std::numeric_limits<std::int64_t>::max() - 9) / 10) throw ParseError(where, "overflow");
        int_part = int_part * 10 + (c - '0');
        ++int_digits;
    }
    if (int_digits == 0) throw ParseError(where, "missing integer digits in '" + std::string(text) + "'");
    std::string frac;
    if (i < text.size()) {
        ++i;  // '.'
        for (; i < text.size(); ++i) {
            char c = text[i];
            if (c < '0' || c > '9') throw ParseError(where, "bad decimal '" + std::string(text) + "'");
            frac.push_back(c);
        }
        if (frac.empty()) throw ParseError(where, "empty fraction in '" + std::string(text) + "'");
    }
    if (infer) precision = static_cast<int>(frac.size());
    if (static_cast<int>(frac.size()) > precision)
        throw ParseError(where, "'" + std::string(text) + "' exceeds precision " + std::to_string(precision));
    std::int64_t scale = pow10(precision);
    std::int64_t frac_val = 0;
    for (char c : frac) frac_val = frac_val * 10 + (c - '0');
    frac_val *= pow10(precision - static_cast<int>(frac.size()));
    if (int_part > std::numeric_limits<std::int64_t>::max() / scale) throw ParseError(where, "overflow");
    std::int64_t minor = int_part * scale + frac_val;
    return Money{negative ? -minor : minor, precision};
}

}  // namespace

Money Money::parse(std::string_view text, int precision) { return parse_impl(text, precision, false); }

Money Money::parse_exact(std::string_view text) { return parse_impl(text, 0, true); }

Money Money::from_double(double value, int precision) {
    return Money{round_half_even(value * static_cast<double>(pow10(precision))), precision};
}

double Money::to_double() const { return static_cast<double>(minor) / static_cast<double>(pow10(precision)); }

std::string Money::to_string() const {
    std::int64_t scale = pow10(precision);
    std::uint64_t mag = minor < 0 ? static_cast<std::uint64_t>(-(minor + 1)) + 1 : static_cast<std::uint64_t>(minor);
    std::string out = minor < 0 ? "-" : "";
    out += std::to_string(mag / static_cast<std::uint64_t>(scale));
    if (precision > 0) {
        std::string frac = std::to_string(mag % static_cast<std::uint64_t>(scale));
        out += '.';
        out.append(static_cast<std::size_t>(precision) - frac.size(), '0');
        out += frac;
    }
    return out;
}

std::string Money::to_signed_string() const { return minor >= 0 ? "+" + to_string() : to_string(); }

Money Money::rescaled(int new_precision) const {
    if (new_precision >= precision) return Money{minor * pow10(new_precision - precision), new_precision};
    return Money{div_round_half_even(minor, pow10(precision - new_precision)), new_precision};
}

Money Money::operator+(const Money& o) const {
    if (precision != o.precision) throw ValidationError("currency precision mismatch");
    return Money{minor + o.minor, precision};
}

Money Money::operator-(const Money& o) const {
    if (precision != o.precision) throw ValidationError("currency precision mismatch");
    return Money{minor - o.minor, precision};
}

std::strong_ordering Money::operator<=>(const Money& o) const {
    if (precision == o.precision) return minor <=> o.minor;
    int p = std::max(precision, o.precision);
    return rescaled(p).minor <=> o.rescaled(p).minor;
}

}  // namespace cpmm
