#include "cpmm/samples.hpp"

namespace cpmm::payload::samples {

const crypto::SigningKey& seller_key() {
    static const auto k = crypto::SigningKey::derive("sample-seller");
    return k;
}
const crypto::SigningKey& buyer_key() {
    static const auto k = crypto::SigningKey::derive("sample-buyer");
    return k;
}
const crypto::SigningKey& attester_key() {
    static const auto k = crypto::SigningKey::derive("sample-attester");
    return k;
}
const crypto::SigningKey& intermediate_key() {
    static const auto k = crypto::SigningKey::derive("sample-intermediate");
    return k;
}
const crypto::SigningKey& root_key() {
    static const auto k = crypto::SigningKey::derive("sample-root");
    return k;
}

std::vector<std::string> attester_chain() {
    return {issue_certificate("attester-1", attester_key().public_key(), "intermediate-ca", intermediate_key()),
            issue_certificate("intermediate-ca", intermediate_key().public_key(), "root-ca", root_key()),
            issue_certificate("root-ca", root_key().public_key(), "root-ca", root_key())};
}

EconomicProposal proposal_unsigned() {
    EconomicProposal ep;
    ep.proposal_id = "3f2b8c1e-9a4d-4e6f-8b7a-1c2d3e4f5a6b";
    ep.timestamp = kEpoch;
    auto& pm = ep.pricing_model;
    pm.base_price = {Money::parse("0.001", 3), "USD"};
    pm.quality_multipliers = {{"latency", "exponential", {{"base", 1.0}, {"exponent", -0.5}}},
                              {"accuracy", "linear", {{"slope", 2.0}, {"intercept", 0.0}}}};
    pm.volume_discounts = {{100, 0.05}};
    ep.payment_terms.accepted_methods = {"X402", "H402", "lightning"};
    ep.payment_terms.refund_policy = {{"service_failure", "sla_violation"}, {"quality_degradation"}, "immediate"};
    ep.service_level_agreement.quality_guarantees = {
        {"latency", "< 100ms", "5% price reduction per 10ms over"},
        {"accuracy", "> 95%", "full refund if < 90%"},
    };
    ep.service_level_agreement.availability_guarantee = "99.9%";
    ep.service_level_agreement.capacity_limits = {10, 1000};
    ep.nanda_capability_hash = crypto::to_hex(crypto::sha256("MarketOracleAgent:market-data"));
    return ep;
}

EconomicProposal proposal() { return sign_proposal(proposal_unsigned(), seller_key()); }

PaymentInstruction instruction() {
    PaymentInstruction pi;
    pi.instruction_id = "7c9e6679-7425-40de-944b-e07fc1f90ae7";
    pi.payment_method = "H402";
    pi.amount.base_amount = Money::parse("1.00", 2);
    pi.amount.currency = "USD";
    pi.amount.quality_adjustments = {{"latency", "85ms", Money::parse("+0.15", 2)}};
    pi.payment_schedule = {"post_delivery", {"service_completion", "quality_verification"}, 300};
    pi.escrow_details = {"nanda:escrow-agent", "escrow:sample", {"mutual_agreement", "sla_compliance", "timeout"}};
    pi.refund_capability = {"nanda-bounded-token", {"service_failure", "sla_violation"}, true};
    return sign_instruction(with_final_amount(pi), buyer_key(), kEpoch + 60);
}

QualityAttestation attestation() {
    QualityAttestation qa;
    qa.attestation_id = "b1a7c2d3-4e5f-4a6b-9c7d-8e9f0a1b2c3d";
    qa.service_instance_id = "d4c3b2a1-0f9e-4d8c-a7b6-5a4b3c2d1e0f";
    qa.timestamp = kEpoch + 120;
    qa.quality_measurements = {
        {"latency", "85ms", "client_side_timing", "\xC2\xB1" "5ms"},
        {"accuracy", "97.3%", "reference_comparison", "\xC2\xB1" "1.2%"},
    };
    qa.attestation_source = {"trusted_execution_environment", "attester-1"};
    return sign_attestation(qa, attester_key(), attester_chain());
}

}  // namespace cpmm::payload::samples
