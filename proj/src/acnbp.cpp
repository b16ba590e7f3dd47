#include <algorithm>

#include "cpmm/acnbp.hpp"
#include "cpmm/error.hpp"

namespace cpmm::acnbp {

namespace {

const std::array<const char*, 11> kNames{"Discover", "PreScreen", "NegotiateRequest", "NegotiateResponse",
                                         "Bind",     "Commit",    "Execute",          "Verify",
                                         "Release",  "Audit",     "Aborted"};

const std::string kZeroHash(64, '0');

}  // namespace

std::string to_string(Step s) { return kNames[static_cast<std::size_t>(s)]; }

Step step_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kNames.size(); ++i)
        if (s == kNames[i]) return static_cast<Step>(i);
    throw ParseError("step", "unknown step '" + s + "'");
}

int step_index(Step s) {
    if (s == Step::Aborted) throw ValidationError("Aborted has no position in the step order");
    return static_cast<int>(s);
}

std::string display_label(Step s) {
    switch (s) {
        case Step::PreScreen: return "Pre-screen";
        case Step::NegotiateRequest:
        case Step::NegotiateResponse: return "Negotiate";
        default: return to_string(s);
    }
}

bool is_checkpoint(Step s) { return s == Step::Discover || s == Step::Bind || s == Step::Release; }

ExtensionManifest ExtensionManifest::cpmm_default() {
    return {kCpmmExtension, "1.0", {"dynamic_pricing", "quality_negotiation", "micropayments", "sla_enforcement"}};
}

ExtensionManifest ExtensionManifest::legacy() { return {"", "1.0", {}}; }

Json to_json(const ExtensionManifest& m) {
    return {{"extension_id", m.extension_id},
            {"version", m.version},
            {"supported_features", std::vector<std::string>(m.supported_features.begin(), m.supported_features.end())}};
}

ExtensionManifest manifest_from_json(const Json& j) {
    try {
        ExtensionManifest m;
        m.extension_id = j.at("extension_id").get<std::string>();
        m.version = j.at("version").get<std::string>();
        for (const auto& f : j.at("supported_features")) m.supported_features.insert(f.get<std::string>());
        return m;
    } catch (const Json::exception& e) {
        throw ParseError("manifest", e.what());
    }
}

// ---------------------------------------------------------------------------

Json to_json(const Envelope& e, bool with_signature) {
    Json j{{"session_id", e.session_id}, {"step", to_string(e.step)}, {"sender", e.sender},
           {"payload", e.payload},       {"timestamp", e.timestamp},  {"performance_bond", nullptr}};
    if (with_signature) j["signature"] = e.signature;
    return j;
}

Envelope envelope_from_json(const Json& j) {
    try {
        if (j.size() != 7 || !j.at("performance_bond").is_null())
            throw ParseError("envelope", "expected the seven envelope fields with a null performance_bond");
        Envelope e;
        e.session_id = j.at("session_id").get<std::string>();
        e.step = step_from_string(j.at("step").get<std::string>());
        e.sender = j.at("sender").get<std::string>();
        e.payload = j.at("payload");
        e.timestamp = j.at("timestamp").get<Timestamp>();
        e.signature = j.at("signature").get<std::string>();
        return e;
    } catch (const Json::exception& ex) {
        throw ParseError("envelope", ex.what());
    }
}

Envelope sign_envelope(Envelope e, const crypto::SigningKey& key) {
    e.signature = crypto::to_base64(key.sign(payload::canonical_serialize(to_json(e, false))));
    return e;
}

bool verify_envelope(const Envelope& e, const crypto::PublicKey& key) {
    try {
        return crypto::verify(key, payload::canonical_serialize(to_json(e, false)),
                              crypto::signature_from_base64(e.signature));
    } catch (const Error&) {
        return false;
    }
}

// ---------------------------------------------------------------------------

Json to_json(const TradeCertificate& c) {
    return {{"serial", c.serial},
            {"issuer", c.issuer},
            {"buyer", c.buyer},
            {"seller", c.seller},
            {"capability", c.capability},
            {"payment", c.payment},
            {"terms_hash", c.terms_hash},
            {"buyer_signature", c.buyer_signature},
            {"seller_signature", c.seller_signature},
            {"authority_signature", c.authority_signature}};
}

std::string abbreviate_signature(const std::string& hex) {
    if (hex.size() <= 16) return "0x" + hex;
    return "0x" + hex.substr(0, 8) + "..." + hex.substr(hex.size() - 8);
}

bool verify_message_log(const NegotiationSession& s, const crypto::PublicKey& authority) {
    for (const auto& m : s.message_log) {
        const crypto::PublicKey* key = m.sender == s.buyer.id    ? &s.buyer.key
                                       : m.sender == s.seller.id ? &s.seller.key
                                       : m.sender == "authority" ? &authority
                                                                 : nullptr;
        if (!key || !verify_envelope(m, *key)) return false;
    }
    return true;
}

std::vector<Step> allowed_next(const NegotiationSession& s) {
    if (!s.step) return {Step::Discover};
    switch (*s.step) {
        case Step::NegotiateResponse:
            if (!s.economic.accepted && s.rounds < kMaxNegotiationRounds) return {Step::Bind, Step::NegotiateRequest};
            return {Step::Bind};
        case Step::Audit:
        case Step::Aborted: return {};
        default: return {kStepOrder[static_cast<std::size_t>(step_index(*s.step) + 1)]};
    }
}

GuardResult check_guard(const NegotiationSession& s, Step target) {
    auto violation = [](std::string why) { return GuardResult{false, std::move(why)}; };
    const auto& econ = s.economic;
    switch (target) {
        case Step::Bind:
            if (!econ.accepted) return violation("payment terms not agreed");
            if (s.legacy) return {};
            if (!s.buyer.manifest.cpmm() || !s.seller.manifest.cpmm())
                return violation("both parties must support " + std::string(kCpmmExtension));
            if (!econ.proposal) return violation("payment terms not agreed");
            {
                const auto& methods = econ.proposal->payment_terms.accepted_methods;
                if (std::find(methods.begin(), methods.end(), econ.payment_method) == methods.end())
                    return violation("no common payment method");
            }
            return {};
        case Step::Commit:
            if (econ.terms_hash.empty()) return violation("terms not bound");
            if (s.legacy) return {};
            if (!econ.agreed_price || !econ.max_price) return violation("payment terms not agreed");
            if (*econ.agreed_price > *econ.max_price) return violation("quoted price exceeds the maximum price");
            if (s.buyer_funds && *s.buyer_funds < *econ.agreed_price)
                return violation("buyer cannot fund the escrow");
            return {};
        case Step::Execute:
            if (!s.certificate) return violation("service delivery not committed");
            if (!s.legacy && s.escrow_state != rail::EscrowState::Funded) return violation("escrow not funded");
            return {};
        case Step::Verify:
            if (s.quality.delivery_hash.empty()) return violation("no delivery recorded");
            return {};
        case Step::Release:
            if (!s.quality.outcome) return violation("verification outcome not recorded");
            return {};
        case Step::Audit:
            if (!s.legacy && (!s.escrow_state || *s.escrow_state == rail::EscrowState::Created ||
                              *s.escrow_state == rail::EscrowState::Funded))
                return violation("escrow not settled");
            return {};
        default: return {};
    }
}

crypto::Digest terms_digest(const NegotiationSession& s) {
    const auto& e = s.economic;
    Json terms{{"session_id", s.session_id},
               {"buyer", s.buyer.id},
               {"seller", s.seller.id},
               {"capability", s.capability},
               {"units", s.units},
               {"price", e.agreed_price ? e.agreed_price->to_string() : ""},
               {"currency", e.proposal ? e.proposal->pricing_model.base_price.currency : ""},
               {"proposal_id", e.proposal ? e.proposal->proposal_id : ""},
               {"payment_method", e.payment_method}};
    return crypto::sha256(payload::canonical_serialize(terms));
}

// ---------------------------------------------------------------------------

std::string AuditTrail::to_jsonl() const {
    std::string out;
    for (const auto& e : entries)
        out += payload::canonical_serialize(Json{{"index", e.index},
                                                 {"prev_hash", e.prev_hash},
                                                 {"record", e.record},
                                                 {"entry_hash", e.entry_hash}}) +
               "\n";
    out += payload::canonical_serialize(Json{{"summary", summary}}) + "\n";
    return out;
}

namespace {

std::string chain_hash(const std::string& prev, const Json& record) {
    return crypto::to_hex(crypto::sha256(prev + payload::canonical_serialize(record)));
}

}  // namespace

std::optional<std::size_t> AuditTrail::first_broken() const {
    std::string prev = kZeroHash;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.index != static_cast<std::int64_t>(i) || e.prev_hash != prev || chain_hash(prev, e.record) != e.entry_hash)
            return i;
        prev = e.entry_hash;
    }
    if (summary.value("chain_head", std::string()) != prev) return entries.size();
    return std::nullopt;
}

ReputationDelta reputation_delta(const NegotiationSession& s) {
    const bool delivered = s.quality.outcome && s.quality.outcome->passed;
    return {+1, delivered ? +1 : -1};
}

int ReputationBook::score(const std::string& agent) const {
    std::lock_guard lock(mu_);
    auto it = scores_.find(agent);
    return it == scores_.end() ? initial_ : it->second;
}

int ReputationBook::apply(const std::string& agent, int delta) {
    std::lock_guard lock(mu_);
    auto it = scores_.try_emplace(agent, initial_).first;
    it->second = std::max(0, it->second + delta);
    return it->second;
}

AuditTrail emit_audit(const NegotiationSession& s, const ReputationBook& book) {
    if (!s.step || (*s.step != Step::Release && *s.step != Step::Audit))
        throw ProtocolError(ProtocolError::Kind::StepOrder, "audit requires a session at Release or later");
    AuditTrail trail;
    trail.session_id = s.session_id;
    std::string prev = kZeroHash;
    for (const auto& m : s.message_log) {
        AuditEntry e;
        e.index = static_cast<std::int64_t>(trail.entries.size());
        e.prev_hash = prev;
        e.record = to_json(m);
        e.entry_hash = chain_hash(prev, e.record);
        prev = e.entry_hash;
        trail.entries.push_back(std::move(e));
    }

    const auto delta = reputation_delta(s);
    auto side = [&](const std::string& id, std::optional<int> before, std::optional<int> after, int d) {
        const int b = before.value_or(book.score(id));
        return Json{{"agent", id}, {"before", b}, {"after", after.value_or(std::max(0, b + d))}, {"delta", d}};
    };
    Json compliance = nullptr;
    if (const auto& o = s.quality.outcome)
        compliance = {{"passed", o->passed},
                      {"failed_step", o->failed_step},
                      {"penalty_fraction", o->penalty_fraction},
                      {"reason", o->reason}};
    trail.summary = {
        {"session_id", s.session_id},
        {"final_amounts",
         {{"released_to_seller", s.released_to_seller.to_string()},
          {"refunded_to_buyer", s.refunded_to_buyer.to_string()},
          {"currency", s.economic.proposal ? s.economic.proposal->pricing_model.base_price.currency : ""}}},
        {"compliance", compliance},
        {"reputation",
         {side(s.buyer.id, s.reputation.buyer_before, s.reputation.buyer_after, delta.buyer),
          side(s.seller.id, s.reputation.seller_before, s.reputation.seller_after, delta.seller)}},
        {"certificate", s.certificate ? to_json(*s.certificate) : Json(nullptr)},
        {"chain_head", prev}};
    return trail;
}

}  // namespace cpmm::acnbp
