#include "cpmm/acnbp.hpp"
#include "cpmm/error.hpp"
#include "cpmm/rng.hpp"

namespace cpmm::acnbp {

namespace {

Json decimal(const Money& m) { return Json::parse(m.to_string()); }

bool duration_unit(const std::string& unit) { return unit == "ms" || unit == "s" || unit == "us" || unit == "ns"; }

Rng script_rng(const TradeSetup& t, Step step, Timestamp at) {
    return make_stream(static_cast<std::uint64_t>(at), t.session_id + "/" + to_string(step));
}

payload::EconomicProposal seller_proposal(const TradeSetup& t, Timestamp at) {
    auto rng = script_rng(t, Step::NegotiateResponse, at);
    payload::EconomicProposal ep = t.proposal_template;
    ep.cryptographic_commitment.reset();
    ep.proposal_id = payload::uuid_v4(rng);
    ep.timestamp = at;
    ep.pricing_model.base_price = {t.quote, t.currency};
    ep.nanda_capability_hash = crypto::to_hex(crypto::sha256(t.seller_id + ":" + t.capability));
    return payload::sign_proposal(std::move(ep), *t.seller_key);
}

}  // namespace

Json scripted_payload(const TradeSetup& t, const NegotiationSession& s, Step step, Timestamp at) {
    const auto& econ = s.economic;
    const bool needs_terms = step == Step::Commit || step == Step::Verify;
    if (needs_terms && !s.legacy && (!econ.proposal || !econ.agreed_price))
        throw ValidationError("no agreed proposal to script " + to_string(step) + " from");
    switch (step) {
        case Step::Discover: return {{"capability", t.capability}, {"provider", t.seller_id}};
        case Step::PreScreen:
            return {{"candidate", t.seller_id},
                    {"passed", true},
                    {"criteria", {"capability", "availability", "cost_estimate"}}};
        case Step::NegotiateRequest: {
            Json j{{"units", t.units}};
            if (s.legacy) return j;
            Json q = Json::object();
            for (const auto& [dim, threshold] : t.quality_request) {
                const auto m = payload::parse_measured(threshold);
                q[dim] = (duration_unit(m.unit) ? "<" : ">") + threshold;
            }
            j["quality_request"] = q;
            j["max_price"] = decimal(t.max_price);
            j["payment_method"] = t.payment_method;
            return j;
        }
        case Step::NegotiateResponse: {
            if (s.legacy) return {{"accepted", true}};
            const auto ep = seller_proposal(t, at);
            return {{"accepted", true},
                    {"price_quote", decimal(t.quote)},
                    {"sla_commitment", rail::sla_hash(ep.service_level_agreement)},
                    {"economic_proposal", payload::to_json(ep)}};
        }
        case Step::Bind: {
            const auto digest = terms_digest(s);
            return {{"terms_hash", crypto::to_hex(digest)},
                    {"buyer_signature", crypto::to_base64(t.buyer_key->sign(digest))},
                    {"seller_signature", crypto::to_base64(t.seller_key->sign(digest))}};
        }
        case Step::Commit: {
            if (s.legacy) return Json::object();
            const std::string account = s.session_id + "-c" + std::to_string(s.payment.commit_attempts + 1);
            auto rng = script_rng(t, step, at);
            payload::PaymentInstruction pi;
            pi.instruction_id = payload::uuid_v4(rng);
            pi.payment_method = econ.payment_method;
            pi.amount.base_amount = *econ.agreed_price;
            pi.amount.currency = econ.proposal->pricing_model.base_price.currency;
            pi.payment_schedule = {"post_delivery", {"service_completion", "quality_verification"}, 300};
            pi.escrow_details = {"cpmm:escrow", account, {"sla_compliance", "timeout"}};
            pi.refund_capability = {"refund-" + account, {"service_failure", "sla_violation"}, true};
            pi = payload::sign_instruction(payload::with_final_amount(pi), *t.buyer_key, at);
            return {{"escrow_account", account}, {"payment_instruction", payload::to_json(pi)}};
        }
        case Step::Execute:
            return {{"delivered", true},
                    {"output_hash", crypto::to_hex(crypto::sha256(s.session_id + ":" + t.capability + ":output"))}};
        case Step::Verify: {
            if (s.legacy) return {{"verified", true}};
            const auto& ep = *econ.proposal;
            auto rng = script_rng(t, step, at);
            payload::QualityAttestation qa;
            qa.attestation_id = payload::uuid_v4(rng);
            qa.service_instance_id = payload::uuid_v4(rng);
            qa.timestamp = at;
            qa.quality_measurements = t.delivered;
            qa.attestation_source = {"trusted_execution_environment", "attester-1"};
            const auto rules = ep.service_level_agreement.rules();
            const auto report = payload::evaluate_sla(rules, qa, *econ.agreed_price);
            qa.sla_compliance.overall_compliance = report.compliant;
            qa.sla_compliance.violations = report.violated_rules;
            qa = payload::sign_attestation(qa, *t.attester_key, t.attester_chain);

            rail::X402Challenge challenge;
            challenge.amount = *econ.agreed_price;
            challenge.currency = ep.pricing_model.base_price.currency;
            challenge.methods = {econ.payment_method};
            challenge.payment_address = "H402://cpmm.escrow/invoice/" + s.payment.escrow_account;
            rail::EphemeralKeyCache cache;
            const auto key = crypto::SigningKey::derive("h402-ephemeral:" + s.payment.escrow_account);
            const auto h = rail::build_h402_payment(challenge, key, t.quality_request,
                                                    rail::sla_hash(ep.service_level_agreement), at, cache);
            Json pay = Json::object();
            for (const auto& [name, value] : rail::encode_h402(h)) pay[name] = value;
            return {{"attestation", payload::to_json(qa)}, {"payment", pay}};
        }
        case Step::Release:
        case Step::Audit: return Json::object();
        case Step::Aborted: break;
    }
    throw ValidationError("no scripted payload for " + to_string(step));
}

Envelope scripted_message(const TradeSetup& t, const NegotiationSession& s, Step step, Timestamp at) {
    const bool seller_sends = step == Step::NegotiateResponse || step == Step::Execute;
    Envelope e{s.session_id, step, seller_sends ? t.seller_id : t.buyer_id, scripted_payload(t, s, step, at), at, ""};
    return sign_envelope(std::move(e), seller_sends ? *t.seller_key : *t.buyer_key);
}

NegotiationSession run_trade(Engine& engine, const TradeSetup& t) {
    if (!t.buyer_key || !t.seller_key) throw ValidationError("trade needs buyer and seller keys");
    if (!t.attester_key && t.buyer_manifest.cpmm() && t.seller_manifest.cpmm())
        throw ValidationError("trade needs an attester key");
    auto s = engine.open(t.session_id, {t.buyer_id, t.buyer_key->public_key(), t.buyer_manifest},
                         {t.seller_id, t.seller_key->public_key(), t.seller_manifest});
    Timestamp at = t.start;
    for (Step step : kStepOrder) {
        auto message = scripted_message(t, s, step, at++);
        s = engine.advance(std::move(s), message);
    }
    return s;
}

}  // namespace cpmm::acnbp
