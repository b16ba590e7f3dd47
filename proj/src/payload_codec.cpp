#include <cmath>
#include <set>

#include "cpmm/error.hpp"
#include "cpmm/payloads.hpp"

namespace cpmm::payload {

namespace {

template <class J>
void require_finite(const J& j) {
    if (j.is_number_float() && !std::isfinite(j.template get<double>()))
        throw ValidationError("non-representable number in record");
    if (j.is_structured())
        for (const auto& child : j) require_finite(child);
}

// Strict field reader: every key must be consumed, missing keys are errors.
class Obj {
public:
    Obj(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) throw ParseError(path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& at(const std::string& key) {
        auto it = j_.find(key);
        if (it == j_.end()) throw ParseError(path_, "missing field '" + key + "'");
        used_.insert(key);
        return *it;
    }

    std::string path(const std::string& key) const { return path_ + "." + key; }

    std::string str(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_string()) throw ParseError(path(key), "expected a string");
        return v.get<std::string>();
    }
    double num(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_number()) throw ParseError(path(key), "expected a number");
        return v.get<double>();
    }
    std::int64_t integer(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_number_integer()) throw ParseError(path(key), "expected an integer");
        return v.get<std::int64_t>();
    }
    bool boolean(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_boolean()) throw ParseError(path(key), "expected a boolean");
        return v.get<bool>();
    }
    std::vector<std::string> strings(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_array()) throw ParseError(path(key), "expected an array");
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string()) throw ParseError(path(key), "expected an array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }
    const Json& array(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_array()) throw ParseError(path(key), "expected an array");
        return v;
    }
    Timestamp timestamp(const std::string& key) {
        std::string text = str(key);
        try {
            return parse_timestamp(text);
        } catch (const ParseError& e) {
            throw ParseError(path(key), e.what());
        }
    }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ParseError(path_, "unknown field '" + it.key() + "'");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> used_;
};

const Json& unwrap(const Json& j, const std::string& kind) {
    if (!j.is_object() || j.size() != 1 || !j.contains(kind)) throw ParseError(kind, "expected {\"" + kind + "\": {...}}");
    return j.at(kind);
}

Money money_at(Obj& o, const std::string& key, int precision) {
    std::string text = o.str(key);
    try {
        return Money::parse(text, precision);
    } catch (const ParseError& e) {
        throw ParseError(o.path(key), e.what());
    }
}

std::string timeout_text(std::int64_t seconds) { return std::to_string(seconds) + "s"; }

std::int64_t parse_timeout(const std::string& text, const std::string& where) {
    if (text.size() < 2 || text.back() != 's') throw ParseError(where, "expected '<seconds>s', got '" + text + "'");
    std::int64_t v = 0;
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        if (text[i] < '0' || text[i] > '9') throw ParseError(where, "expected '<seconds>s', got '" + text + "'");
        v = v * 10 + (text[i] - '0');
        if (v > 1'000'000'000'000LL) throw ParseError(where, "timeout too large");
    }
    return v;
}

Json ep_body(const EconomicProposal& ep, bool with_commitment) {
    const auto& pm = ep.pricing_model;
    Json multipliers = Json::array();
    for (const auto& m : pm.quality_multipliers) {
        Json params = Json::object();
        for (const auto& [k, v] : m.parameters) params[k] = v;
        multipliers.push_back({{"dimension", m.dimension}, {"function", m.function}, {"parameters", params}});
    }
    Json discounts = Json::array();
    for (const auto& d : pm.volume_discounts)
        discounts.push_back({{"threshold", d.threshold}, {"discount_rate", d.discount_rate}});
    Json guarantees = Json::array();
    for (const auto& g : ep.service_level_agreement.quality_guarantees)
        guarantees.push_back({{"dimension", g.dimension}, {"guarantee", g.guarantee}, {"penalty", g.penalty}});
    const auto& rp = ep.payment_terms.refund_policy;

    Json body = {
        {"version", ep.version},
        {"proposal_id", ep.proposal_id},
        {"timestamp", format_timestamp(ep.timestamp)},
        {"pricing_model",
         {{"type", pm.type},
          {"base_price",
           {{"amount", pm.base_price.amount.to_string()},
            {"currency", pm.base_price.currency},
            {"precision", pm.base_price.amount.precision}}},
          {"quality_multipliers", multipliers},
          {"volume_discounts", discounts}}},
        {"payment_terms",
         {{"accepted_methods", ep.payment_terms.accepted_methods},
          {"payment_timing", ep.payment_terms.payment_timing},
          {"escrow_required", ep.payment_terms.escrow_required},
          {"refund_policy",
           {{"full_refund_conditions", rp.full_refund_conditions},
            {"partial_refund_conditions", rp.partial_refund_conditions},
            {"refund_timeframe", rp.refund_timeframe}}}}},
        {"service_level_agreement",
         {{"quality_guarantees", guarantees},
          {"availability_guarantee", ep.service_level_agreement.availability_guarantee},
          {"capacity_limits",
           {{"max_concurrent_requests", ep.service_level_agreement.capacity_limits.max_concurrent_requests},
            {"max_requests_per_hour", ep.service_level_agreement.capacity_limits.max_requests_per_hour}}}}},
        {"nanda_capability_hash", ep.nanda_capability_hash},
    };
    if (with_commitment && ep.cryptographic_commitment) {
        const auto& c = *ep.cryptographic_commitment;
        body["cryptographic_commitment"] = {
            {"commitment_hash", c.commitment_hash}, {"signature", c.signature}, {"public_key", c.public_key}};
    }
    return body;
}

Json pi_body(const PaymentInstruction& pi, bool with_proof) {
    Json adjustments = Json::array();
    for (const auto& a : pi.amount.quality_adjustments)
        adjustments.push_back(
            {{"dimension", a.dimension}, {"measured_value", a.measured_value}, {"adjustment", a.adjustment.to_signed_string()}});
    Json amount = {{"base_amount", pi.amount.base_amount.to_string()},
                   {"currency", pi.amount.currency},
                   {"quality_adjustments", adjustments}};
    if (pi.amount.final_amount) amount["final_amount"] = pi.amount.final_amount->to_string();
    Json body = {
        {"version", pi.version},
        {"instruction_id", pi.instruction_id},
        {"payment_method", pi.payment_method},
        {"amount", amount},
        {"payment_schedule",
         {{"type", pi.payment_schedule.type},
          {"trigger_conditions", pi.payment_schedule.trigger_conditions},
          {"timeout", timeout_text(pi.payment_schedule.timeout_seconds)}}},
        {"escrow_details",
         {{"escrow_agent", pi.escrow_details.escrow_agent},
          {"escrow_contract", pi.escrow_details.escrow_contract},
          {"release_conditions", pi.escrow_details.release_conditions}}},
        {"refund_capability",
         {{"capability_token", pi.refund_capability.capability_token},
          {"refund_conditions", pi.refund_capability.refund_conditions},
          {"automatic_triggers", pi.refund_capability.automatic_triggers}}},
    };
    if (with_proof && pi.cryptographic_proof) {
        const auto& p = *pi.cryptographic_proof;
        body["cryptographic_proof"] = {{"payment_commitment", p.payment_commitment},
                                       {"signature", p.signature},
                                       {"timestamp", format_timestamp(p.timestamp)}};
    }
    return body;
}

Json measurements_json(const std::vector<QualityMeasurement>& ms) {
    Json out = Json::array();
    for (const auto& m : ms)
        out.push_back({{"dimension", m.dimension},
                       {"measured_value", m.measured_value},
                       {"measurement_method", m.measurement_method},
                       {"confidence_interval", m.confidence_interval}});
    return out;
}

Json qa_body(const QualityAttestation& qa, bool with_proof) {
    Json body = {
        {"version", qa.version},
        {"attestation_id", qa.attestation_id},
        {"service_instance_id", qa.service_instance_id},
        {"timestamp", format_timestamp(qa.timestamp)},
        {"quality_measurements", measurements_json(qa.quality_measurements)},
        {"sla_compliance",
         {{"overall_compliance", qa.sla_compliance.overall_compliance},
          {"violations", qa.sla_compliance.violations},
          {"penalties_applied", qa.sla_compliance.penalties_applied}}},
        {"attestation_source", {{"type", qa.attestation_source.type}, {"attester_id", qa.attestation_source.attester_id}}},
    };
    if (with_proof && qa.cryptographic_proof) {
        const auto& p = *qa.cryptographic_proof;
        body["cryptographic_proof"] = {{"measurement_hash", p.measurement_hash},
                                       {"signature", p.signature},
                                       {"certificate_chain", p.certificate_chain}};
    }
    return body;
}

bool is_hex64(const std::string& s) {
    if (s.size() != 64) return false;
    for (char c : s)
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    return true;
}

}  // namespace

std::string canonical_serialize(const Json& value) {
    require_finite(value);
    try {
        return value.dump(-1, ' ', false, Json::error_handler_t::strict);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("record is not valid UTF-8: ") + e.what());
    }
}

std::string canonical_serialize(const OrderedJson& value) {
    require_finite(value);
    return canonical_serialize(Json::parse(value.dump()));
}

Json to_json(const EconomicProposal& ep) { return {{"economic_proposal", ep_body(ep, true)}}; }
Json to_json(const PaymentInstruction& pi) { return {{"payment_instruction", pi_body(pi, true)}}; }
Json to_json(const QualityAttestation& qa) { return {{"quality_attestation", qa_body(qa, true)}}; }

std::string canonical_serialize(const EconomicProposal& ep) { return canonical_serialize(to_json(ep)); }
std::string canonical_serialize(const PaymentInstruction& pi) { return canonical_serialize(to_json(pi)); }
std::string canonical_serialize(const QualityAttestation& qa) { return canonical_serialize(to_json(qa)); }

EconomicProposal proposal_from_json(const Json& j) {
    Obj o(unwrap(j, "economic_proposal"), "economic_proposal");
    EconomicProposal ep;
    ep.version = o.str("version");
    ep.proposal_id = o.str("proposal_id");
    ep.timestamp = o.timestamp("timestamp");

    Obj pm(o.at("pricing_model"), o.path("pricing_model"));
    ep.pricing_model.type = pm.str("type");
    Obj bp(pm.at("base_price"), pm.path("base_price"));
    std::int64_t precision = bp.integer("precision");
    if (precision < 0 || precision > 18) throw ParseError(bp.path("precision"), "precision must be in [0, 18]");
    ep.pricing_model.base_price.amount = money_at(bp, "amount", static_cast<int>(precision));
    ep.pricing_model.base_price.currency = bp.str("currency");
    bp.done();
    for (const auto& mj : pm.array("quality_multipliers")) {
        Obj m(mj, pm.path("quality_multipliers[]"));
        QualityMultiplier qm;
        qm.dimension = m.str("dimension");
        qm.function = m.str("function");
        Obj params(m.at("parameters"), m.path("parameters"));
        for (auto it = mj.at("parameters").begin(); it != mj.at("parameters").end(); ++it)
            qm.parameters[it.key()] = params.num(it.key());
        params.done();
        m.done();
        ep.pricing_model.quality_multipliers.push_back(std::move(qm));
    }
    for (const auto& dj : pm.array("volume_discounts")) {
        Obj d(dj, pm.path("volume_discounts[]"));
        ep.pricing_model.volume_discounts.push_back({d.integer("threshold"), d.num("discount_rate")});
        d.done();
    }
    pm.done();

    Obj pt(o.at("payment_terms"), o.path("payment_terms"));
    ep.payment_terms.accepted_methods = pt.strings("accepted_methods");
    ep.payment_terms.payment_timing = pt.str("payment_timing");
    ep.payment_terms.escrow_required = pt.boolean("escrow_required");
    Obj rp(pt.at("refund_policy"), pt.path("refund_policy"));
    ep.payment_terms.refund_policy.full_refund_conditions = rp.strings("full_refund_conditions");
    ep.payment_terms.refund_policy.partial_refund_conditions = rp.strings("partial_refund_conditions");
    ep.payment_terms.refund_policy.refund_timeframe = rp.str("refund_timeframe");
    rp.done();
    pt.done();

    Obj sla(o.at("service_level_agreement"), o.path("service_level_agreement"));
    for (const auto& gj : sla.array("quality_guarantees")) {
        Obj g(gj, sla.path("quality_guarantees[]"));
        ep.service_level_agreement.quality_guarantees.push_back({g.str("dimension"), g.str("guarantee"), g.str("penalty")});
        g.done();
    }
    ep.service_level_agreement.availability_guarantee = sla.str("availability_guarantee");
    Obj cl(sla.at("capacity_limits"), sla.path("capacity_limits"));
    ep.service_level_agreement.capacity_limits = {cl.integer("max_concurrent_requests"), cl.integer("max_requests_per_hour")};
    cl.done();
    sla.done();

    ep.nanda_capability_hash = o.str("nanda_capability_hash");
    if (o.has("cryptographic_commitment")) {
        Obj c(o.at("cryptographic_commitment"), o.path("cryptographic_commitment"));
        ep.cryptographic_commitment = CryptographicCommitment{c.str("commitment_hash"), c.str("signature"), c.str("public_key")};
        c.done();
    }
    o.done();
    validate(ep);
    return ep;
}

PaymentInstruction instruction_from_json(const Json& j) {
    Obj o(unwrap(j, "payment_instruction"), "payment_instruction");
    PaymentInstruction pi;
    pi.version = o.str("version");
    pi.instruction_id = o.str("instruction_id");
    pi.payment_method = o.str("payment_method");

    Obj a(o.at("amount"), o.path("amount"));
    std::string base_text = a.str("base_amount");
    try {
        pi.amount.base_amount = Money::parse_exact(base_text);
    } catch (const ParseError& e) {
        throw ParseError(a.path("base_amount"), e.what());
    }
    const int precision = pi.amount.base_amount.precision;
    pi.amount.currency = a.str("currency");
    for (const auto& qj : a.array("quality_adjustments")) {
        Obj q(qj, a.path("quality_adjustments[]"));
        QualityAdjustment adj;
        adj.dimension = q.str("dimension");
        adj.measured_value = q.str("measured_value");
        std::string text = q.str("adjustment");
        try {
            adj.adjustment = Money::parse(text, precision);
        } catch (const ParseError&) {
            throw ParseError(q.path("adjustment"),
                             "adjustment '" + text + "' does not fit the instruction precision " + std::to_string(precision));
        }
        q.done();
        pi.amount.quality_adjustments.push_back(std::move(adj));
    }
    if (a.has("final_amount")) pi.amount.final_amount = money_at(a, "final_amount", precision);
    a.done();

    Obj s(o.at("payment_schedule"), o.path("payment_schedule"));
    pi.payment_schedule.type = s.str("type");
    pi.payment_schedule.trigger_conditions = s.strings("trigger_conditions");
    pi.payment_schedule.timeout_seconds = parse_timeout(s.str("timeout"), s.path("timeout"));
    s.done();

    Obj e(o.at("escrow_details"), o.path("escrow_details"));
    pi.escrow_details.escrow_agent = e.str("escrow_agent");
    pi.escrow_details.escrow_contract = e.str("escrow_contract");
    pi.escrow_details.release_conditions = e.strings("release_conditions");
    e.done();

    Obj r(o.at("refund_capability"), o.path("refund_capability"));
    pi.refund_capability.capability_token = r.str("capability_token");
    pi.refund_capability.refund_conditions = r.strings("refund_conditions");
    pi.refund_capability.automatic_triggers = r.boolean("automatic_triggers");
    r.done();

    if (o.has("cryptographic_proof")) {
        Obj p(o.at("cryptographic_proof"), o.path("cryptographic_proof"));
        pi.cryptographic_proof = PaymentProof{p.str("payment_commitment"), p.str("signature"), p.timestamp("timestamp")};
        p.done();
    }
    o.done();
    validate(pi);
    return pi;
}

QualityAttestation attestation_from_json(const Json& j) {
    Obj o(unwrap(j, "quality_attestation"), "quality_attestation");
    QualityAttestation qa;
    qa.version = o.str("version");
    qa.attestation_id = o.str("attestation_id");
    qa.service_instance_id = o.str("service_instance_id");
    qa.timestamp = o.timestamp("timestamp");
    for (const auto& mj : o.array("quality_measurements")) {
        Obj m(mj, o.path("quality_measurements[]"));
        qa.quality_measurements.push_back(
            {m.str("dimension"), m.str("measured_value"), m.str("measurement_method"), m.str("confidence_interval")});
        m.done();
    }
    Obj c(o.at("sla_compliance"), o.path("sla_compliance"));
    qa.sla_compliance.overall_compliance = c.boolean("overall_compliance");
    qa.sla_compliance.violations = c.strings("violations");
    qa.sla_compliance.penalties_applied = c.strings("penalties_applied");
    c.done();
    Obj src(o.at("attestation_source"), o.path("attestation_source"));
    qa.attestation_source = {src.str("type"), src.str("attester_id")};
    src.done();
    if (o.has("cryptographic_proof")) {
        Obj p(o.at("cryptographic_proof"), o.path("cryptographic_proof"));
        qa.cryptographic_proof = AttestationProof{p.str("measurement_hash"), p.str("signature"), p.strings("certificate_chain")};
        p.done();
    }
    o.done();
    validate(qa);
    return qa;
}

void validate(const EconomicProposal& ep) {
    if (!is_uuid(ep.proposal_id)) throw ValidationError("proposal_id is not a UUID");
    const auto& bp = ep.pricing_model.base_price;
    if (bp.amount.precision < 0 || bp.amount.precision > 18) throw ValidationError("precision must be in [0, 18]");
    if (bp.amount.minor < 0) throw ValidationError("base price must be non-negative");
    if (!is_known_currency(bp.currency)) throw ValidationError("unknown currency '" + bp.currency + "'");
    for (const auto& d : ep.pricing_model.volume_discounts) {
        if (!(d.discount_rate >= 0.0 && d.discount_rate < 1.0)) throw ValidationError("discount_rate must be in [0, 1)");
        if (d.threshold < 0) throw ValidationError("volume threshold must be non-negative");
    }
    for (const auto& m : ep.pricing_model.quality_multipliers)
        for (const auto& [k, v] : m.parameters)
            if (!std::isfinite(v)) throw ValidationError("multiplier parameter '" + k + "' is not finite");
    if (ep.payment_terms.accepted_methods.empty()) throw ValidationError("accepted_methods is empty");
    for (const auto& m : ep.payment_terms.accepted_methods)
        if (m != "X402" && m != "H402" && m != "lightning") throw ValidationError("unknown payment method '" + m + "'");
    (void)ep.service_level_agreement.rules();
    if (!is_hex64(ep.nanda_capability_hash)) throw ValidationError("nanda_capability_hash is not SHA-256 hex");
}

void validate(const PaymentInstruction& pi) {
    if (!is_uuid(pi.instruction_id)) throw ValidationError("instruction_id is not a UUID");
    if (pi.amount.base_amount.minor < 0) throw ValidationError("base_amount must be non-negative");
    if (!is_known_currency(pi.amount.currency)) throw ValidationError("unknown currency '" + pi.amount.currency + "'");
    if (pi.payment_schedule.timeout_seconds <= 0) throw ValidationError("timeout must be positive");
    const int p = pi.amount.base_amount.precision;
    for (const auto& a : pi.amount.quality_adjustments)
        if (a.adjustment.precision != p) throw ValidationError("adjustment precision mismatch");
    if (pi.amount.final_amount && (pi.amount.final_amount->precision != p || pi.amount.final_amount->minor < 0))
        throw ValidationError("final_amount must be non-negative at the instruction precision");
}

void validate(const QualityAttestation& qa) {
    if (!is_uuid(qa.attestation_id)) throw ValidationError("attestation_id is not a UUID");
    if (!is_uuid(qa.service_instance_id)) throw ValidationError("service_instance_id is not a UUID");
    std::set<std::string> dims;
    for (const auto& m : qa.quality_measurements) {
        if (!dims.insert(m.dimension).second) throw ValidationError("duplicate measurement for '" + m.dimension + "'");
        (void)parse_measured(m.measured_value);
    }
}

std::vector<SlaRule> ServiceLevelAgreement::rules() const {
    std::vector<SlaRule> out;
    for (const auto& g : quality_guarantees) out.push_back(parse_sla_rule(g.dimension, g.guarantee, g.penalty));
    return out;
}

const QualityMeasurement* QualityAttestation::find(const std::string& dimension) const {
    for (const auto& m : quality_measurements)
        if (m.dimension == dimension) return &m;
    return nullptr;
}

// Bodies without their proof subtrees, reused by the commitment code.
Json proposal_unsigned_json(const EconomicProposal& ep) { return {{"economic_proposal", ep_body(ep, false)}}; }
Json instruction_unsigned_json(const PaymentInstruction& pi) { return {{"payment_instruction", pi_body(pi, false)}}; }
Json attestation_unsigned_json(const QualityAttestation& qa) { return {{"quality_attestation", qa_body(qa, false)}}; }
Json measurements_to_json(const std::vector<QualityMeasurement>& ms) { return measurements_json(ms); }

}  // namespace cpmm::payload
