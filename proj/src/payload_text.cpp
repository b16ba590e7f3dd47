#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cpmm/error.hpp"
#include "cpmm/payloads.hpp"

namespace cpmm::payload {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

int digits(const std::string& s, std::size_t pos, std::size_t n) {
    if (pos + n > s.size()) throw ParseError("timestamp", "truncated '" + s + "'");
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') throw ParseError("timestamp", "expected digit in '" + s + "'");
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

void expect(const std::string& s, std::size_t pos, char c) {
    if (pos >= s.size() || s[pos] != c) throw ParseError("timestamp", std::string("expected '") + c + "' in '" + s + "'");
}

bool is_hex(char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F'); }

double parse_decimal(const std::string& text, const std::string& where) {
    bool seen_digit = false, seen_dot = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c >= '0' && c <= '9') {
            seen_digit = true;
        } else if (c == '.' && !seen_dot && seen_digit && i + 1 < text.size()) {
            seen_dot = true;
        } else {
            throw ParseError(where, "bad number '" + text + "'");
        }
    }
    if (!seen_digit) throw ParseError(where, "missing number");
    double v = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), v);
    return v;
}

// Splits "100ms" into the numeric prefix and the unit suffix.
Measured split_number_unit(const std::string& text, const std::string& where) {
    std::size_t i = 0;
    while (i < text.size() && ((text[i] >= '0' && text[i] <= '9') || text[i] == '.')) ++i;
    Measured m;
    m.value = parse_decimal(text.substr(0, i), where);
    m.unit = text.substr(i);
    for (char c : m.unit)
        if (c == ' ' || c == '\t') throw ParseError(where, "whitespace inside unit of '" + text + "'");
    return m;
}

std::vector<std::string> words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

bool parse_comparator(const std::string& tok, Comparator& out) {
    if (tok == "<") out = Comparator::Less;
    else if (tok == ">") out = Comparator::Greater;
    else if (tok == "<=" || tok == "\xE2\x89\xA4") out = Comparator::LessEqual;
    else if (tok == ">=" || tok == "\xE2\x89\xA5") out = Comparator::GreaterEqual;
    else return false;
    return true;
}

// "<100ms" written without a space is accepted too.
std::vector<std::string> split_comparator(std::vector<std::string> toks) {
    if (toks.empty()) return toks;
    for (const char* prefix : {"<=", ">=", "\xE2\x89\xA4", "\xE2\x89\xA5", "<", ">"}) {
        std::string p(prefix);
        if (toks[0] == p) break;
        if (toks[0].size() > p.size() && toks[0].compare(0, p.size(), p) == 0) {
            std::string rest = toks[0].substr(p.size());
            toks[0] = p;
            toks.insert(toks.begin() + 1, rest);
            break;
        }
    }
    return toks;
}

double parse_percent(const std::string& tok, const std::string& where) {
    if (tok.size() < 2 || tok.back() != '%') throw ParseError(where, "expected a percentage, got '" + tok + "'");
    return parse_decimal(tok.substr(0, tok.size() - 1), where);
}

}  // namespace

std::string format_timestamp(Timestamp t) {
    std::int64_t days = t / 86400;
    std::int64_t secs = t % 86400;
    if (secs < 0) {
        secs += 86400;
        --days;
    }
    std::int64_t y = 0;
    unsigned m = 0, d = 0;
    civil_from_days(days, y, m, d);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(secs / 3600), static_cast<long long>(secs / 60 % 60),
                  static_cast<long long>(secs % 60));
    return buf;
}

Timestamp parse_timestamp(const std::string& s) {
    const int year = digits(s, 0, 4);
    expect(s, 4, '-');
    const int month = digits(s, 5, 2);
    expect(s, 7, '-');
    const int day = digits(s, 8, 2);
    if (s.size() <= 10 || (s[10] != 'T' && s[10] != 't'))
        throw ParseError("timestamp", "expected 'T' in '" + s + "'");
    const int hour = digits(s, 11, 2);
    expect(s, 13, ':');
    const int minute = digits(s, 14, 2);
    expect(s, 16, ':');
    const int second = digits(s, 17, 2);
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
        throw ParseError("timestamp", "field out of range in '" + s + "'");
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) throw ParseError("timestamp", "empty fraction in '" + s + "'");
    }
    std::int64_t offset = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        const int sign = s[pos] == '+' ? 1 : -1;
        const int oh = digits(s, pos + 1, 2);
        expect(s, pos + 3, ':');
        const int om = digits(s, pos + 4, 2);
        offset = sign * (oh * 3600 + om * 60);
        pos += 6;
    } else {
        throw ParseError("timestamp", "missing UTC designator in '" + s + "'");
    }
    if (pos != s.size()) throw ParseError("timestamp", "trailing characters in '" + s + "'");
    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    return days * 86400 + hour * 3600 + minute * 60 + second - offset;
}

std::string uuid_v4(Rng& rng) {
    std::uint64_t hi = rng(), lo = rng();
    hi = (hi & ~std::uint64_t{0xF000}) | 0x4000;
    lo = (lo & ~(std::uint64_t{0xC} << 60)) | (std::uint64_t{0x8} << 60);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%08llx-%04llx-%04llx-%04llx-%012llx", static_cast<unsigned long long>(hi >> 32),
                  static_cast<unsigned long long>((hi >> 16) & 0xFFFF), static_cast<unsigned long long>(hi & 0xFFFF),
                  static_cast<unsigned long long>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
    return buf;
}

bool is_uuid(const std::string& t) {
    if (t.size() != 36) return false;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i == 8 || i == 13 || i == 18 || i == 23) {
            if (t[i] != '-') return false;
        } else if (!is_hex(t[i])) {
            return false;
        }
    }
    return true;
}

bool is_known_currency(const std::string& code) {
    static const std::set<std::string> known{"USD", "EUR", "GBP", "JPY", "CHF", "CNY", "BTC", "ETH", "USDC", "SAT", "UNITS"};
    return known.count(code) > 0;
}

bool holds(Comparator cmp, double value, double threshold) {
    switch (cmp) {
        case Comparator::Less: return value < threshold;
        case Comparator::Greater: return value > threshold;
        case Comparator::LessEqual: return value <= threshold;
        case Comparator::GreaterEqual: return value >= threshold;
    }
    return false;
}

std::string to_string(Comparator cmp) {
    switch (cmp) {
        case Comparator::Less: return "<";
        case Comparator::Greater: return ">";
        case Comparator::LessEqual: return "<=";
        case Comparator::GreaterEqual: return ">=";
    }
    return "?";
}

std::string format_number(double v) {
    if (!std::isfinite(v)) throw ValidationError("non-finite number in SLA text");
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    return std::string(buf, res.ptr);
}

Measured parse_measured(const std::string& text) { return split_number_unit(text, "measured_value"); }

std::string format_measured(const Measured& m) { return format_number(m.value) + m.unit; }

std::string emit_guarantee(const SlaRule& rule) {
    return to_string(rule.comparator) + " " + format_number(rule.threshold) + rule.unit;
}

std::string emit_penalty(const Penalty& penalty) {
    struct Emit {
        std::string operator()(const PercentPerUnitOver& p) const {
            return format_number(p.rate_percent) + "% price reduction per " + format_number(p.step) + p.unit + " over";
        }
        std::string operator()(const FullRefundBelow& p) const {
            return "full refund if " + to_string(p.comparator) + " " + format_number(p.threshold) + p.unit;
        }
        std::string operator()(const FixedPercent& p) const { return format_number(p.rate_percent) + "% price reduction"; }
    };
    return std::visit(Emit{}, penalty);
}

SlaRule parse_sla_rule(const std::string& dimension, const std::string& guarantee, const std::string& penalty) {
    if (dimension.empty()) throw ParseError("sla", "empty dimension");
    SlaRule rule;
    rule.dimension = dimension;

    auto g = split_comparator(words(guarantee));
    if (g.size() != 2 || !parse_comparator(g[0], rule.comparator))
        throw ParseError("guarantee", "expected '<cmp> <value><unit>', got '" + guarantee + "'");
    Measured gm = split_number_unit(g[1], "guarantee");
    rule.threshold = gm.value;
    rule.unit = gm.unit;

    auto p = words(penalty);
    if (p.size() == 6 && p[1] == "price" && p[2] == "reduction" && p[3] == "per" && p[5] == "over") {
        PercentPerUnitOver r;
        r.rate_percent = parse_percent(p[0], "penalty");
        Measured step = split_number_unit(p[4], "penalty");
        if (!(step.value > 0.0)) throw ParseError("penalty", "step must be positive in '" + penalty + "'");
        r.step = step.value;
        r.unit = step.unit;
        rule.penalty = r;
    } else if (p.size() >= 4 && p[0] == "full" && p[1] == "refund" && p[2] == "if") {
        std::vector<std::string> tail(p.begin() + 3, p.end());
        tail = split_comparator(tail);
        FullRefundBelow r;
        if (tail.size() != 2 || !parse_comparator(tail[0], r.comparator))
            throw ParseError("penalty", "expected 'full refund if <cmp> <value><unit>', got '" + penalty + "'");
        Measured m = split_number_unit(tail[1], "penalty");
        r.threshold = m.value;
        r.unit = m.unit;
        const bool upper_bound = rule.comparator == Comparator::Less || rule.comparator == Comparator::LessEqual;
        const bool refund_above = r.comparator == Comparator::Greater || r.comparator == Comparator::GreaterEqual;
        if (upper_bound != refund_above)
            throw ParseError("penalty", "refund condition must point away from the guarantee in '" + penalty + "'");
        rule.penalty = r;
    } else if (p.size() == 3 && p[1] == "price" && p[2] == "reduction") {
        rule.penalty = FixedPercent{parse_percent(p[0], "penalty")};
    } else {
        throw ParseError("penalty", "unrecognized penalty '" + penalty + "'");
    }
    return rule;
}

}  // namespace cpmm::payload
