#include <charconv>
#include <cstdlib>

#include "cpmm/error.hpp"
#include "cpmm/rail.hpp"

namespace cpmm::rail {

namespace {

bool duration_unit(const std::string& unit) { return unit == "ms" || unit == "s" || unit == "us" || unit == "ns"; }

VerificationResult fail(VerifyStep step, std::string reason, double penalty = 0.0) {
    VerificationResult r;
    r.failed_step = static_cast<int>(step);
    r.reason = std::move(reason);
    r.penalty_fraction = penalty;
    return r;
}

}  // namespace

bool EphemeralKeyCache::claim(const crypto::PublicKey& key) {
    std::lock_guard lock(mu_);
    return seen_.insert(key).second;
}

H402PaymentHeaders build_h402_payment(const X402Challenge& challenge, const crypto::SigningKey& key,
                                      const QualityList& quality_request, const std::string& sla_hash,
                                      std::int64_t now, EphemeralKeyCache& cache) {
    validate(challenge);
    if (!cache.claim(key.public_key())) throw StateError("ephemeral payment key reused");
    H402PaymentHeaders h;
    h.payment_key = crypto::to_base64(key.public_key());
    h.amount = challenge.amount;
    h.currency = challenge.currency;
    h.invoice = challenge.invoice_id();
    h.timestamp = std::to_string(now);
    h.quality_request = quality_request;
    h.sla_acceptance = sla_hash;
    h.signature = crypto::to_base64(key.sign(signing_payload(h)));
    (void)encode_h402(h);
    return h;
}

bool quality_meets(const payload::Measured& delivered, const payload::Measured& requested) {
    if (delivered.unit != requested.unit) return false;
    return duration_unit(requested.unit) ? delivered.value <= requested.value : delivered.value >= requested.value;
}

VerificationResult PaymentVerifier::verify(const H402PaymentHeaders& headers, const payload::QualityAttestation& att,
                                           const std::vector<payload::SlaRule>& rules,
                                           const std::string& agreed_sla_hash, std::int64_t now) {
    // 1. signature, freshness and single use
    crypto::PublicKey key{};
    crypto::Signature sig{};
    try {
        key = crypto::public_key_from_base64(headers.payment_key);
        sig = crypto::signature_from_base64(headers.signature);
    } catch (const Error& e) {
        return fail(VerifyStep::Signature, std::string("undecodable key or signature: ") + e.what());
    }
    std::int64_t ts = 0;
    const auto& t = headers.timestamp;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), ts);
    if (ec != std::errc() || ptr != t.data() + t.size()) return fail(VerifyStep::Signature, "timestamp is not unix seconds");
    if (!crypto::verify(key, signing_payload(headers), sig)) return fail(VerifyStep::Signature, "signature mismatch");
    if (std::llabs(now - ts) > kClockSkewSeconds) return fail(VerifyStep::Signature, "timestamp outside the skew window");
    {
        std::lock_guard lock(mu_);
        if (!spent_.insert({headers.payment_key, headers.invoice}).second)
            return fail(VerifyStep::Signature, "payment key already spent on this invoice");
    }

    // 2. delivered quality against the request
    for (const auto& [dim, threshold] : headers.quality_request) {
        const auto* m = att.find(dim);
        if (!m) return fail(VerifyStep::Quality, "no measurement for '" + dim + "'");
        try {
            auto delivered = payload::parse_measured(m->measured_value);
            auto requested = payload::parse_measured(threshold);
            if (!quality_meets(delivered, requested))
                return fail(VerifyStep::Quality, dim + " delivered " + m->measured_value + " against " + threshold);
        } catch (const Error& e) {
            return fail(VerifyStep::Quality, e.what());
        }
    }

    // 3. SLA terms
    if (headers.sla_acceptance != agreed_sla_hash) return fail(VerifyStep::Sla, "accepted SLA differs from the agreed SLA");
    double penalty = 0.0;
    try {
        auto report = payload::evaluate_sla(rules, att, headers.amount);
        penalty = report.penalty_fraction;
        if (!report.compliant) return fail(VerifyStep::Sla, "SLA violated", penalty);
    } catch (const Error& e) {
        return fail(VerifyStep::Sla, e.what());
    }

    // 4. attestation
    auto check = payload::verify_attestation(att, trust_root_);
    if (check != payload::AttestationCheck::Ok) return fail(VerifyStep::Attestation, payload::to_string(check));

    // 5. settlement
    VerificationResult ok;
    ok.settle = true;
    ok.penalty_fraction = penalty;
    ok.settlement = SettlementInstruction{headers.invoice, headers.amount, headers.currency, "H402", headers.payment_key};
    return ok;
}

}  // namespace cpmm::rail
