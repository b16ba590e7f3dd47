#include <algorithm>
#include <cmath>

#include "cpmm/error.hpp"
#include "cpmm/payloads.hpp"

namespace cpmm::payload {

Json proposal_unsigned_json(const EconomicProposal& ep);
Json instruction_unsigned_json(const PaymentInstruction& pi);
Json attestation_unsigned_json(const QualityAttestation& qa);
Json measurements_to_json(const std::vector<QualityMeasurement>& ms);

namespace {

bool try_decode(const std::string& key_b64, const std::string& sig_b64, crypto::PublicKey& key, crypto::Signature& sig) {
    try {
        key = crypto::public_key_from_base64(key_b64);
        sig = crypto::signature_from_base64(sig_b64);
        return true;
    } catch (const Error&) {
        return false;
    }
}

Json certificate_body(const std::string& subject, const std::string& issuer, const crypto::PublicKey& key) {
    return {{"subject", subject}, {"issuer", issuer}, {"public_key", crypto::to_base64(key)}};
}

double multiplier(const QualityMultiplier& m, double q) {
    auto param = [&](const char* name) {
        auto it = m.parameters.find(name);
        if (it == m.parameters.end())
            throw ValidationError("multiplier on '" + m.dimension + "' lacks parameter '" + name + "'");
        return it->second;
    };
    if (m.function == "linear") return param("slope") * q + param("intercept");
    if (m.function == "exponential") return param("base") * std::exp2(param("exponent") * q);
    throw ValidationError("unknown multiplier function '" + m.function + "'");
}

}  // namespace

crypto::Digest commitment_digest(const EconomicProposal& ep) {
    return crypto::sha256(canonical_serialize(proposal_unsigned_json(ep)));
}

CryptographicCommitment commit(const EconomicProposal& ep, const crypto::SigningKey& key) {
    auto digest = commitment_digest(ep);
    return {crypto::to_hex(digest), crypto::to_base64(key.sign(digest)), crypto::to_base64(key.public_key())};
}

bool verify_commitment(const EconomicProposal& ep, const CryptographicCommitment& c) {
    crypto::PublicKey key{};
    crypto::Signature sig{};
    if (!try_decode(c.public_key, c.signature, key, sig)) return false;
    crypto::Digest digest;
    try {
        digest = commitment_digest(ep);
    } catch (const Error&) {
        return false;
    }
    if (crypto::to_hex(digest) != c.commitment_hash) return false;
    return crypto::verify(key, digest, sig);
}

EconomicProposal sign_proposal(EconomicProposal ep, const crypto::SigningKey& key) {
    ep.cryptographic_commitment = commit(ep, key);
    return ep;
}

crypto::Digest instruction_digest(const PaymentInstruction& pi) {
    return crypto::sha256(canonical_serialize(instruction_unsigned_json(pi)));
}

PaymentInstruction sign_instruction(PaymentInstruction pi, const crypto::SigningKey& key, Timestamp at) {
    auto digest = instruction_digest(pi);
    pi.cryptographic_proof = PaymentProof{crypto::to_hex(digest), crypto::to_base64(key.sign(digest)), at};
    return pi;
}

bool verify_instruction(const PaymentInstruction& pi, const crypto::PublicKey& key) {
    if (!pi.cryptographic_proof) return false;
    crypto::Signature sig{};
    try {
        sig = crypto::signature_from_base64(pi.cryptographic_proof->signature);
    } catch (const Error&) {
        return false;
    }
    auto digest = instruction_digest(pi);
    return crypto::to_hex(digest) == pi.cryptographic_proof->payment_commitment && crypto::verify(key, digest, sig);
}

std::string measurement_hash(const std::vector<QualityMeasurement>& measurements) {
    return crypto::to_hex(crypto::sha256(canonical_serialize(measurements_to_json(measurements))));
}

std::string issue_certificate(const std::string& subject, const crypto::PublicKey& subject_key, const std::string& issuer,
                              const crypto::SigningKey& issuer_key) {
    Json body = certificate_body(subject, issuer, subject_key);
    auto sig = issuer_key.sign(crypto::sha256(canonical_serialize(body)));
    body["signature"] = crypto::to_base64(sig);
    std::string bytes = canonical_serialize(body);
    return crypto::to_base64(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

Certificate decode_certificate(const std::string& encoded) {
    auto raw = crypto::from_base64(encoded);
    Json j;
    try {
        j = Json::parse(raw.begin(), raw.end());
    } catch (const Json::exception& e) {
        throw ParseError("certificate", e.what());
    }
    if (!j.is_object() || j.size() != 4) throw ParseError("certificate", "expected subject, issuer, public_key, signature");
    Certificate c;
    try {
        c.subject = j.at("subject").get<std::string>();
        c.issuer = j.at("issuer").get<std::string>();
        c.public_key = crypto::public_key_from_base64(j.at("public_key").get<std::string>());
        c.signature = crypto::signature_from_base64(j.at("signature").get<std::string>());
    } catch (const Json::exception& e) {
        throw ParseError("certificate", e.what());
    }
    return c;
}

std::optional<crypto::PublicKey> verify_chain(const std::vector<std::string>& chain, const crypto::PublicKey& trust_root) {
    if (chain.empty() || chain.size() > kMaxChainDepth) return std::nullopt;
    std::vector<Certificate> certs;
    try {
        for (const auto& enc : chain) certs.push_back(decode_certificate(enc));
    } catch (const Error&) {
        return std::nullopt;
    }
    for (std::size_t i = 0; i < certs.size(); ++i) {
        const Certificate& c = certs[i];
        const Certificate& signer = i + 1 < certs.size() ? certs[i + 1] : c;
        if (c.issuer != signer.subject) return std::nullopt;
        auto digest = crypto::sha256(canonical_serialize(certificate_body(c.subject, c.issuer, c.public_key)));
        if (!crypto::verify(signer.public_key, digest, c.signature)) return std::nullopt;
    }
    if (certs.back().public_key != trust_root) return std::nullopt;
    return certs.front().public_key;
}

crypto::Digest attestation_digest(const QualityAttestation& qa) {
    return crypto::sha256(canonical_serialize(attestation_unsigned_json(qa)));
}

QualityAttestation sign_attestation(QualityAttestation qa, const crypto::SigningKey& attester,
                                    std::vector<std::string> chain) {
    auto sig = attester.sign(attestation_digest(qa));
    qa.cryptographic_proof =
        AttestationProof{measurement_hash(qa.quality_measurements), crypto::to_base64(sig), std::move(chain)};
    return qa;
}

AttestationCheck verify_attestation(const QualityAttestation& qa, const crypto::PublicKey& trust_root) {
    if (!qa.cryptographic_proof) return AttestationCheck::MissingProof;
    const auto& proof = *qa.cryptographic_proof;
    if (measurement_hash(qa.quality_measurements) != proof.measurement_hash) return AttestationCheck::MeasurementHash;
    auto leaf = verify_chain(proof.certificate_chain, trust_root);
    if (!leaf) return AttestationCheck::Chain;
    crypto::Signature sig{};
    try {
        sig = crypto::signature_from_base64(proof.signature);
    } catch (const Error&) {
        return AttestationCheck::Signature;
    }
    return crypto::verify(*leaf, attestation_digest(qa), sig) ? AttestationCheck::Ok : AttestationCheck::Signature;
}

std::string to_string(AttestationCheck c) {
    switch (c) {
        case AttestationCheck::Ok: return "ok";
        case AttestationCheck::MissingProof: return "missing proof";
        case AttestationCheck::MeasurementHash: return "measurement hash mismatch";
        case AttestationCheck::Chain: return "certificate chain rejected";
        case AttestationCheck::Signature: return "bad attestation signature";
    }
    return "?";
}

double applicable_discount(const std::vector<VolumeDiscount>& discounts, std::int64_t volume) {
    double best = 0.0;
    for (const auto& d : discounts)
        if (d.threshold <= volume) best = std::max(best, d.discount_rate);
    return best;
}

Money price_quote(const EconomicProposal& ep, const std::map<std::string, double>& q, std::int64_t volume) {
    if (volume < 1) throw ValidationError("volume must be at least 1");
    for (const auto& [dim, v] : q)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("quality for '" + dim + "' outside [0, 1]");
    const Money& base = ep.pricing_model.base_price.amount;
    double factor = 1.0;
    for (const auto& m : ep.pricing_model.quality_multipliers) {
        auto it = q.find(m.dimension);
        factor *= multiplier(m, it == q.end() ? 0.0 : it->second);
    }
    factor *= 1.0 - applicable_discount(ep.pricing_model.volume_discounts, volume);
    double minor = static_cast<double>(base.minor) * factor;
    if (!std::isfinite(minor)) throw ValidationError("quote is not finite");
    return Money::from_minor(std::max<std::int64_t>(0, round_half_even(minor)), base.precision);
}

Money price_quote(const EconomicProposal& ep, const econ::DimensionRegistry& dims, const econ::QualityVector& q,
                  std::int64_t volume) {
    if (q.size() != dims.size()) throw DimensionError("quality vector does not match the dimension registry");
    std::map<std::string, double> named;
    for (std::size_t i = 0; i < dims.size(); ++i) named[dims[i].name] = q[i];
    return price_quote(ep, named, volume);
}

SlaReport evaluate_sla(const std::vector<SlaRule>& rules, const QualityAttestation& att, const Money& price) {
    SlaReport report;
    double total = 0.0;
    for (const auto& rule : rules) {
        const QualityMeasurement* m = att.find(rule.dimension);
        if (!m) throw ValidationError("attestation has no measurement for '" + rule.dimension + "'");
        Measured measured = parse_measured(m->measured_value);
        if (measured.unit != rule.unit)
            throw ValidationError("unit mismatch on '" + rule.dimension + "': '" + measured.unit + "' vs '" + rule.unit + "'");
        double contribution = 0.0;
        const bool met = holds(rule.comparator, measured.value, rule.threshold);
        if (const auto* p = std::get_if<PercentPerUnitOver>(&rule.penalty)) {
            if (p->unit != rule.unit) throw ValidationError("penalty unit differs from guarantee unit");
            if (!met) {
                double steps = std::ceil(std::abs(measured.value - rule.threshold) / p->step - 1e-9);
                contribution = p->rate_percent / 100.0 * std::max(0.0, steps);
            }
        } else if (const auto* p = std::get_if<FullRefundBelow>(&rule.penalty)) {
            if (p->unit != rule.unit) throw ValidationError("penalty unit differs from guarantee unit");
            if (holds(p->comparator, measured.value, p->threshold)) contribution = 1.0;
        } else if (const auto* p = std::get_if<FixedPercent>(&rule.penalty)) {
            if (!met) contribution = p->rate_percent / 100.0;
        }
        if (contribution > 0.0) report.violated_rules.push_back(rule.dimension);
        total += contribution;
    }
    report.penalty_fraction = std::min(1.0, total);
    report.compliant = report.penalty_fraction == 0.0;
    report.penalty_amount =
        Money::from_minor(round_half_even(static_cast<double>(price.minor) * report.penalty_fraction), price.precision);
    return report;
}

Money compute_final_amount(const PaymentInstruction& pi) {
    Money total = pi.amount.base_amount;
    for (const auto& a : pi.amount.quality_adjustments) {
        if (a.adjustment.precision != total.precision)
            throw ValidationError("adjustment on '" + a.dimension + "' does not match the instruction precision");
        total += a.adjustment;
    }
    if (total.minor < 0) total.minor = 0;
    return total;
}

PaymentInstruction with_final_amount(PaymentInstruction pi) {
    pi.amount.final_amount = compute_final_amount(pi);
    return pi;
}

}  // namespace cpmm::payload
