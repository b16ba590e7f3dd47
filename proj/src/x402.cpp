#include <algorithm>
#include <cctype>
#include <sstream>

#include "cpmm/error.hpp"
#include "cpmm/rail.hpp"

namespace cpmm::rail {

namespace {

constexpr const char* kRequired = "X402-Payment-Required";
constexpr const char* kAddress = "X402-Payment-Address";
constexpr const char* kMetadata = "X402-Payment-Metadata";
constexpr const char* kProposal = "CPMM-Economic-Proposal";
constexpr const char* kToken = "CPMM-Negotiation-Token";

constexpr const char* kKey = "H402-Payment-Key";
constexpr const char* kAmount = "H402-Payment-Amount";
constexpr const char* kCurrency = "H402-Payment-Currency";
constexpr const char* kInvoice = "H402-Payment-Invoice";
constexpr const char* kSignature = "H402-Payment-Signature";
constexpr const char* kTimestamp = "H402-Payment-Timestamp";
constexpr const char* kQuality = "H402-Quality-Request";
constexpr const char* kSla = "H402-SLA-Acceptance";

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool starts_with_ci(const std::string& s, const std::string& prefix) {
    return lower(s).rfind(lower(prefix), 0) == 0;
}

// Visible ASCII without spaces.
bool is_token(const std::string& s) {
    if (s.empty()) return false;
    for (unsigned char c : s)
        if (c < 0x21 || c > 0x7E) return false;
    return true;
}

void require_token(const std::string& value, const std::string& header, const std::string& what) {
    if (!is_token(value)) throw ValidationError(header + ": " + what + " must be non-empty visible ASCII without spaces");
}

// Collects recognized headers; rejects duplicates and unknown names in the
// reserved prefixes.
class HeaderSet {
public:
    HeaderSet(const Headers& headers, std::vector<std::string> known, std::vector<std::string> reserved_prefixes) {
        for (const auto& [name, value] : headers) {
            auto it = std::find_if(known.begin(), known.end(), [&](const std::string& k) { return lower(k) == lower(name); });
            if (it == known.end()) {
                for (const auto& p : reserved_prefixes)
                    if (starts_with_ci(name, p)) throw ParseError(name, "unknown header");
                continue;
            }
            if (!values_.emplace(*it, value).second) throw ParseError(*it, "duplicate header");
        }
    }
    bool has(const std::string& name) const { return values_.count(name) > 0; }
    const std::string& get(const std::string& name) const {
        auto it = values_.find(name);
        if (it == values_.end()) throw ParseError(name, "missing header");
        return it->second;
    }

private:
    std::map<std::string, std::string> values_;
};

// "k1=v1 k2=v2" with single spaces, no duplicate keys.
std::map<std::string, std::string> parse_params(const std::string& value, const std::string& header,
                                                const std::set<std::string>& allowed) {
    std::map<std::string, std::string> out;
    std::size_t pos = 0;
    if (value.empty()) throw ParseError(header, "empty value");
    while (pos <= value.size()) {
        std::size_t end = value.find(' ', pos);
        if (end == std::string::npos) end = value.size();
        std::string tok = value.substr(pos, end - pos);
        auto eq = tok.find('=');
        if (tok.empty() || eq == std::string::npos || eq == 0 || eq + 1 == tok.size())
            throw ParseError(header, "malformed token '" + tok + "'");
        std::string key = tok.substr(0, eq);
        if (!allowed.count(key)) throw ParseError(header, "unknown parameter '" + key + "'");
        if (!out.emplace(key, tok.substr(eq + 1)).second) throw ParseError(header, "duplicate parameter '" + key + "'");
        pos = end + 1;
    }
    return out;
}

const std::string& param(const std::map<std::string, std::string>& params, const std::string& key,
                         const std::string& header) {
    auto it = params.find(key);
    if (it == params.end()) throw ParseError(header, "missing parameter '" + key + "'");
    return it->second;
}

Money parse_amount(const std::string& text, const std::string& header) {
    try {
        return Money::parse_exact(text);
    } catch (const ParseError& e) {
        throw ParseError(header, e.what());
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t end = s.find(sep, pos);
        out.push_back(s.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
        if (end == std::string::npos) break;
        pos = end + 1;
    }
    return out;
}

bool valid_scheme_uri(const std::string& uri) {
    auto sep = uri.find("://");
    if (sep == std::string::npos || sep == 0 || sep + 3 >= uri.size()) return false;
    if (!std::isalpha(static_cast<unsigned char>(uri[0]))) return false;
    for (std::size_t i = 1; i < sep; ++i) {
        char c = uri[i];
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') return false;
    }
    return is_token(uri);
}

}  // namespace

std::string format_quality_list(const QualityList& list) {
    std::string out;
    for (const auto& [dim, thr] : list) {
        if (!out.empty()) out += ',';
        out += dim + ":" + thr;
    }
    return out;
}

QualityList parse_quality_list(const std::string& text, const std::string& where) {
    QualityList out;
    if (text.empty()) throw ParseError(where, "empty quality list");
    for (const auto& item : split(text, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
            throw ParseError(where, "malformed quality item '" + item + "'");
        out.emplace_back(item.substr(0, colon), item.substr(colon + 1));
    }
    return out;
}

namespace {

void validate_quality_list(const QualityList& list, const std::string& header) {
    if (list.empty()) throw ValidationError(header + ": quality list is empty");
    for (const auto& [dim, thr] : list) {
        require_token(dim, header, "dimension");
        require_token(thr, header, "threshold");
        if (dim.find_first_of(",:") != std::string::npos || thr.find(',') != std::string::npos)
            throw ValidationError(header + ": ',' and ':' are reserved in quality lists");
    }
}

}  // namespace

std::string X402Challenge::invoice_id() const {
    auto slash = payment_address.find_last_of('/');
    return slash == std::string::npos ? payment_address : payment_address.substr(slash + 1);
}

void validate(const X402Challenge& c) {
    if (c.amount.minor <= 0) throw ValidationError("X402 amount must be positive");
    if (!payload::is_known_currency(c.currency)) throw ValidationError("unknown currency '" + c.currency + "'");
    if (c.methods.empty()) throw ValidationError("X402 method list is empty");
    for (const auto& m : c.methods) {
        require_token(m, kRequired, "method");
        if (m.find(',') != std::string::npos) throw ValidationError("method names cannot contain ','");
    }
    if (c.timeout_seconds && *c.timeout_seconds <= 0) throw ValidationError("X402 timeout must be positive");
    if (!valid_scheme_uri(c.payment_address)) throw ValidationError("payment address must be scheme://...");
    if (c.invoice_id().empty()) throw ValidationError("payment address has no invoice segment");
    if (c.metadata) {
        validate_quality_list(c.metadata->sla_vector, kMetadata);
        require_token(c.metadata->refund_policy, kMetadata, "refund_policy");
    }
    if (c.economic_proposal) {
        require_token(*c.economic_proposal, kProposal, "value");
        (void)crypto::from_base64(*c.economic_proposal);
    }
    if (c.negotiation_token) require_token(*c.negotiation_token, kToken, "value");
}

Headers encode_402(const X402Challenge& c) {
    validate(c);
    std::string methods;
    for (const auto& m : c.methods) methods += (methods.empty() ? "" : ",") + m;
    std::string required = "amount=" + c.amount.to_string() + " currency=" + c.currency + " method=" + methods;
    if (c.timeout_seconds) required += " timeout=" + std::to_string(*c.timeout_seconds);
    Headers h{{kRequired, required}, {kAddress, c.payment_address}};
    if (c.metadata)
        h.emplace_back(kMetadata, "sla_vector=" + format_quality_list(c.metadata->sla_vector) +
                                      " refund_policy=" + c.metadata->refund_policy);
    if (c.economic_proposal) h.emplace_back(kProposal, *c.economic_proposal);
    if (c.negotiation_token) h.emplace_back(kToken, *c.negotiation_token);
    return h;
}

X402Challenge parse_402(const Headers& headers) {
    HeaderSet set(headers, {kRequired, kAddress, kMetadata, kProposal, kToken}, {"X402-", "CPMM-"});
    X402Challenge c;
    auto req = parse_params(set.get(kRequired), kRequired, {"amount", "currency", "method", "timeout"});
    c.amount = parse_amount(param(req, "amount", kRequired), kRequired);
    c.currency = param(req, "currency", kRequired);
    if (!payload::is_known_currency(c.currency)) throw ParseError(kRequired, "unknown currency '" + c.currency + "'");
    c.methods = split(param(req, "method", kRequired), ',');
    if (req.count("timeout")) {
        const std::string& t = req.at("timeout");
        if (t.empty() || t.size() > 12 || !std::all_of(t.begin(), t.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
            throw ParseError(kRequired, "timeout must be an integer number of seconds");
        c.timeout_seconds = std::stoll(t);
    }
    c.payment_address = set.get(kAddress);
    if (set.has(kMetadata)) {
        auto meta = parse_params(set.get(kMetadata), kMetadata, {"sla_vector", "refund_policy"});
        c.metadata = X402Metadata{parse_quality_list(param(meta, "sla_vector", kMetadata), kMetadata),
                                  param(meta, "refund_policy", kMetadata)};
    }
    if (set.has(kProposal)) {
        c.economic_proposal = set.get(kProposal);
        try {
            (void)crypto::from_base64(*c.economic_proposal);
        } catch (const ParseError& e) {
            throw ParseError(kProposal, e.what());
        }
    }
    if (set.has(kToken)) c.negotiation_token = set.get(kToken);
    try {
        validate(c);
    } catch (const ValidationError& e) {
        throw ParseError("X402", e.what());
    }
    return c;
}

std::string render_402_response(const X402Challenge& c) {
    std::string out = "HTTP/1.1 402 Payment Required\r\nContent-Type: application/json\r\n";
    for (const auto& [name, value] : encode_402(c)) out += name + ": " + value + "\r\n";
    out += "Cache-Control: no-cache\r\n\r\n";
    return out;
}

X402Challenge parse_402_response(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto next = [&]() {
        if (!std::getline(in, line)) return false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line.rfind("HTTP/", 0) != 0 || line.find(" 402") == std::string::npos)
        throw ParseError("status", "expected an HTTP 402 status line");
    Headers headers;
    while (next() && !line.empty()) {
        auto colon = line.find(':');
        if (colon == std::string::npos || colon == 0) throw ParseError("header", "malformed header line '" + line + "'");
        std::string value = line.substr(colon + 1);
        std::size_t first = value.find_first_not_of(' ');
        headers.emplace_back(line.substr(0, colon), first == std::string::npos ? "" : value.substr(first));
    }
    return parse_402(headers);
}

std::string encode_proposal_header(const payload::EconomicProposal& ep) {
    std::string bytes = payload::canonical_serialize(ep);
    std::string b64 = crypto::to_base64(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
    for (auto& ch : b64) {
        if (ch == '+') ch = '-';
        if (ch == '/') ch = '_';
    }
    while (!b64.empty() && b64.back() == '=') b64.pop_back();
    return b64;
}

payload::EconomicProposal decode_proposal_header(const std::string& value) {
    auto raw = crypto::from_base64(value);
    try {
        return payload::proposal_from_json(payload::Json::parse(raw.begin(), raw.end()));
    } catch (const payload::Json::exception& e) {
        throw ParseError(kProposal, e.what());
    }
}

std::string sla_hash(const payload::ServiceLevelAgreement& sla) {
    payload::EconomicProposal holder;
    holder.service_level_agreement = sla;
    auto j = payload::to_json(holder);
    return crypto::to_hex(crypto::sha256(payload::canonical_serialize(j["economic_proposal"]["service_level_agreement"])));
}

Headers encode_h402(const H402PaymentHeaders& h) {
    require_token(h.payment_key, kKey, "value");
    if (h.amount.minor < 0) throw ValidationError("H402 amount must be non-negative");
    if (!payload::is_known_currency(h.currency)) throw ValidationError("unknown currency '" + h.currency + "'");
    require_token(h.invoice, kInvoice, "value");
    require_token(h.signature, kSignature, "value");
    require_token(h.timestamp, kTimestamp, "value");
    validate_quality_list(h.quality_request, kQuality);
    require_token(h.sla_acceptance, kSla, "value");
    return {{kKey, h.payment_key},
            {kAmount, h.amount.to_string()},
            {kCurrency, h.currency},
            {kInvoice, h.invoice},
            {kSignature, h.signature},
            {kTimestamp, h.timestamp},
            {kQuality, format_quality_list(h.quality_request)},
            {kSla, h.sla_acceptance}};
}

H402PaymentHeaders parse_h402(const Headers& headers) {
    HeaderSet set(headers, {kKey, kAmount, kCurrency, kInvoice, kSignature, kTimestamp, kQuality, kSla}, {"H402-"});
    H402PaymentHeaders h;
    h.payment_key = set.get(kKey);
    h.amount = parse_amount(set.get(kAmount), kAmount);
    h.currency = set.get(kCurrency);
    if (!payload::is_known_currency(h.currency)) throw ParseError(kCurrency, "unknown currency '" + h.currency + "'");
    h.invoice = set.get(kInvoice);
    h.signature = set.get(kSignature);
    h.timestamp = set.get(kTimestamp);
    h.quality_request = parse_quality_list(set.get(kQuality), kQuality);
    h.sla_acceptance = set.get(kSla);
    try {
        (void)encode_h402(h);
    } catch (const ValidationError& e) {
        throw ParseError("H402", e.what());
    }
    return h;
}

std::string signing_payload(const H402PaymentHeaders& h) {
    return "h402|v1|" + h.amount.to_string() + "|" + h.currency + "|" + h.invoice + "|" + h.timestamp + "|" +
           format_quality_list(h.quality_request) + "|" + h.sla_acceptance;
}

}  // namespace cpmm::rail
