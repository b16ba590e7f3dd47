#pragma once

// Economic proposal, payment instruction and quality attestation records with
// a canonical JSON encoding, Ed25519 commitments, SLA evaluation and pricing.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cpmm/crypto.hpp"
#include "cpmm/economic.hpp"
#include "cpmm/money.hpp"
#include "cpmm/rng.hpp"

namespace cpmm::payload {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Unix seconds, rendered as ISO-8601 UTC with a Z suffix.
using Timestamp = std::int64_t;

std::string format_timestamp(Timestamp t);
/// Accepts "YYYY-MM-DDTHH:MM:SS" followed by Z or a +HH:MM / -HH:MM offset,
/// with optional fractional seconds (truncated).
Timestamp parse_timestamp(const std::string& text);

std::string uuid_v4(Rng& rng);
bool is_uuid(const std::string& text);

bool is_known_currency(const std::string& code);

/// Sorted keys, no whitespace, UTF-8. Rejects NaN and infinities.
std::string canonical_serialize(const Json& value);
std::string canonical_serialize(const OrderedJson& value);

// ---------------------------------------------------------------------------
// SLA grammar

enum class Comparator { Less, Greater, LessEqual, GreaterEqual };

/// Whether `value cmp threshold` holds.
bool holds(Comparator cmp, double value, double threshold);
std::string to_string(Comparator cmp);

struct Measured {
    double value = 0.0;
    std::string unit;  ///< "ms", "%", ... possibly empty
    bool operator==(const Measured&) const = default;
};

/// "85ms" -> {85, "ms"}, "97.3%" -> {97.3, "%"}.
Measured parse_measured(const std::string& text);
std::string format_number(double v);
std::string format_measured(const Measured& m);

struct PercentPerUnitOver {
    double rate_percent = 0.0;
    double step = 1.0;
    std::string unit;
    bool operator==(const PercentPerUnitOver&) const = default;
};
struct FullRefundBelow {
    Comparator comparator = Comparator::Less;
    double threshold = 0.0;
    std::string unit;
    bool operator==(const FullRefundBelow&) const = default;
};
struct FixedPercent {
    double rate_percent = 0.0;
    bool operator==(const FixedPercent&) const = default;
};
using Penalty = std::variant<PercentPerUnitOver, FullRefundBelow, FixedPercent>;

struct SlaRule {
    std::string dimension;
    Comparator comparator = Comparator::Less;
    double threshold = 0.0;
    std::string unit;
    Penalty penalty;

    bool operator==(const SlaRule&) const = default;
};

/// "< 100ms"
std::string emit_guarantee(const SlaRule& rule);
/// "5% price reduction per 10ms over", "full refund if < 90%", "10% price reduction"
std::string emit_penalty(const Penalty& penalty);
SlaRule parse_sla_rule(const std::string& dimension, const std::string& guarantee, const std::string& penalty);

// ---------------------------------------------------------------------------
// Economic proposal

struct BasePrice {
    Money amount;  ///< precision carried by the amount
    std::string currency;
    bool operator==(const BasePrice&) const = default;
};

struct QualityMultiplier {
    std::string dimension;
    std::string function;  ///< "linear" or "exponential"
    std::map<std::string, double> parameters;
    bool operator==(const QualityMultiplier&) const = default;
};

struct VolumeDiscount {
    std::int64_t threshold = 0;
    double discount_rate = 0.0;
    bool operator==(const VolumeDiscount&) const = default;
};

struct PricingModel {
    std::string type = "dynamic_quality_based";
    BasePrice base_price;
    std::vector<QualityMultiplier> quality_multipliers;
    std::vector<VolumeDiscount> volume_discounts;
    bool operator==(const PricingModel&) const = default;
};

struct RefundPolicy {
    std::vector<std::string> full_refund_conditions;
    std::vector<std::string> partial_refund_conditions;
    std::string refund_timeframe = "immediate";
    bool operator==(const RefundPolicy&) const = default;
};

struct PaymentTerms {
    std::vector<std::string> accepted_methods;  ///< subset of X402, H402, lightning
    std::string payment_timing = "post_delivery";
    bool escrow_required = true;
    RefundPolicy refund_policy;
    bool operator==(const PaymentTerms&) const = default;
};

struct QualityGuarantee {
    std::string dimension;
    std::string guarantee;
    std::string penalty;
    bool operator==(const QualityGuarantee&) const = default;
};

struct CapacityLimits {
    std::int64_t max_concurrent_requests = 0;
    std::int64_t max_requests_per_hour = 0;
    bool operator==(const CapacityLimits&) const = default;
};

struct ServiceLevelAgreement {
    std::vector<QualityGuarantee> quality_guarantees;
    std::string availability_guarantee;
    CapacityLimits capacity_limits;
    bool operator==(const ServiceLevelAgreement&) const = default;

    std::vector<SlaRule> rules() const;
};

struct CryptographicCommitment {
    std::string commitment_hash;  ///< SHA-256 hex
    std::string signature;        ///< base64 Ed25519
    std::string public_key;       ///< base64 Ed25519
    bool operator==(const CryptographicCommitment&) const = default;
};

struct EconomicProposal {
    std::string version = "1.0";
    std::string proposal_id;
    Timestamp timestamp = 0;
    PricingModel pricing_model;
    PaymentTerms payment_terms;
    ServiceLevelAgreement service_level_agreement;
    std::string nanda_capability_hash;
    std::optional<CryptographicCommitment> cryptographic_commitment;
    bool operator==(const EconomicProposal&) const = default;
};

// ---------------------------------------------------------------------------
// Payment instruction

struct QualityAdjustment {
    std::string dimension;
    std::string measured_value;
    Money adjustment;  ///< signed, at the instruction precision
    bool operator==(const QualityAdjustment&) const = default;
};

struct InstructionAmount {
    Money base_amount;
    std::string currency;
    std::vector<QualityAdjustment> quality_adjustments;
    std::optional<Money> final_amount;
    bool operator==(const InstructionAmount&) const = default;
};

struct PaymentSchedule {
    std::string type = "post_delivery";
    std::vector<std::string> trigger_conditions;
    std::int64_t timeout_seconds = 300;
    bool operator==(const PaymentSchedule&) const = default;
};

struct EscrowDetails {
    std::string escrow_agent;
    std::string escrow_contract;
    std::vector<std::string> release_conditions;
    bool operator==(const EscrowDetails&) const = default;
};

struct RefundCapability {
    std::string capability_token;
    std::vector<std::string> refund_conditions;
    bool automatic_triggers = true;
    bool operator==(const RefundCapability&) const = default;
};

struct PaymentProof {
    std::string payment_commitment;
    std::string signature;
    Timestamp timestamp = 0;
    bool operator==(const PaymentProof&) const = default;
};

struct PaymentInstruction {
    std::string version = "1.0";
    std::string instruction_id;
    std::string payment_method = "H402";
    InstructionAmount amount;
    PaymentSchedule payment_schedule;
    EscrowDetails escrow_details;
    RefundCapability refund_capability;
    std::optional<PaymentProof> cryptographic_proof;
    bool operator==(const PaymentInstruction&) const = default;
};

// ---------------------------------------------------------------------------
// Quality attestation

struct QualityMeasurement {
    std::string dimension;
    std::string measured_value;
    std::string measurement_method;
    std::string confidence_interval;
    bool operator==(const QualityMeasurement&) const = default;
};

struct SlaCompliance {
    bool overall_compliance = true;
    std::vector<std::string> violations;
    std::vector<std::string> penalties_applied;
    bool operator==(const SlaCompliance&) const = default;
};

struct AttestationSource {
    std::string type = "trusted_execution_environment";
    std::string attester_id;
    bool operator==(const AttestationSource&) const = default;
};

struct AttestationProof {
    std::string measurement_hash;
    std::string signature;
    std::vector<std::string> certificate_chain;  ///< leaf first, root last
    bool operator==(const AttestationProof&) const = default;
};

struct QualityAttestation {
    std::string version = "1.0";
    std::string attestation_id;
    std::string service_instance_id;
    Timestamp timestamp = 0;
    std::vector<QualityMeasurement> quality_measurements;
    SlaCompliance sla_compliance;
    AttestationSource attestation_source;
    std::optional<AttestationProof> cryptographic_proof;
    bool operator==(const QualityAttestation&) const = default;

    const QualityMeasurement* find(const std::string& dimension) const;
};

// ---------------------------------------------------------------------------
// Wire codec. Each record is wrapped under its kind key, e.g.
// {"economic_proposal": {...}}. Parsing is strict: unknown or missing fields
// throw ParseError naming the path.

Json to_json(const EconomicProposal& ep);
Json to_json(const PaymentInstruction& pi);
Json to_json(const QualityAttestation& qa);
EconomicProposal proposal_from_json(const Json& j);
PaymentInstruction instruction_from_json(const Json& j);
QualityAttestation attestation_from_json(const Json& j);

std::string canonical_serialize(const EconomicProposal& ep);
std::string canonical_serialize(const PaymentInstruction& pi);
std::string canonical_serialize(const QualityAttestation& qa);

/// Structural checks beyond what parsing enforces (invariants of each record).
void validate(const EconomicProposal& ep);
void validate(const PaymentInstruction& pi);
void validate(const QualityAttestation& qa);

// ---------------------------------------------------------------------------
// Commitments

/// SHA-256 of the canonical proposal with the commitment subtree removed.
crypto::Digest commitment_digest(const EconomicProposal& ep);
CryptographicCommitment commit(const EconomicProposal& ep, const crypto::SigningKey& key);
/// Never throws; malformed hex/base64 yields false.
bool verify_commitment(const EconomicProposal& ep, const CryptographicCommitment& c);
/// Returns a copy with the commitment filled in.
EconomicProposal sign_proposal(EconomicProposal ep, const crypto::SigningKey& key);

crypto::Digest instruction_digest(const PaymentInstruction& pi);
PaymentInstruction sign_instruction(PaymentInstruction pi, const crypto::SigningKey& key, Timestamp at);
bool verify_instruction(const PaymentInstruction& pi, const crypto::PublicKey& key);

/// SHA-256 hex of the canonical quality_measurements array.
std::string measurement_hash(const std::vector<QualityMeasurement>& measurements);

// ---------------------------------------------------------------------------
// Simulated attestation PKI. A certificate is base64 of the canonical JSON
// {subject, issuer, public_key, signature}; the signature is the issuer's
// Ed25519 signature over SHA-256 of the object without "signature".

struct Certificate {
    std::string subject;
    std::string issuer;
    crypto::PublicKey public_key{};
    crypto::Signature signature{};
};

std::string issue_certificate(const std::string& subject, const crypto::PublicKey& subject_key,
                              const std::string& issuer, const crypto::SigningKey& issuer_key);
Certificate decode_certificate(const std::string& encoded);

inline constexpr std::size_t kMaxChainDepth = 3;

/// Leaf key when the chain is well-formed, at most kMaxChainDepth long, each
/// link signed by the next and the last one self-signed by `trust_root`.
std::optional<crypto::PublicKey> verify_chain(const std::vector<std::string>& chain,
                                              const crypto::PublicKey& trust_root);

/// Fills measurement_hash, the signature over the attestation digest (the
/// canonical record without cryptographic_proof) and the given chain.
QualityAttestation sign_attestation(QualityAttestation qa, const crypto::SigningKey& attester,
                                    std::vector<std::string> chain);
crypto::Digest attestation_digest(const QualityAttestation& qa);

enum class AttestationCheck { Ok, MissingProof, MeasurementHash, Chain, Signature };
AttestationCheck verify_attestation(const QualityAttestation& qa, const crypto::PublicKey& trust_root);
std::string to_string(AttestationCheck c);

// ---------------------------------------------------------------------------
// Pricing and settlement amounts

/// Quote for one unit at quality q (dimension name -> normalized value) when
/// buying `volume` units. Multipliers whose dimension is absent from q are
/// evaluated at q = 0.
Money price_quote(const EconomicProposal& ep, const std::map<std::string, double>& q, std::int64_t volume);
Money price_quote(const EconomicProposal& ep, const econ::DimensionRegistry& dims, const econ::QualityVector& q,
                  std::int64_t volume);
/// Highest discount rate whose threshold is <= volume, 0 if none.
double applicable_discount(const std::vector<VolumeDiscount>& discounts, std::int64_t volume);

struct SlaReport {
    bool compliant = true;
    double penalty_fraction = 0.0;
    std::vector<std::string> violated_rules;  ///< dimensions contributing a penalty
    Money penalty_amount;                     ///< price * penalty_fraction, half-even
};

SlaReport evaluate_sla(const std::vector<SlaRule>& rules, const QualityAttestation& att, const Money& price);

/// base_amount + sum(adjustments), floored at zero.
Money compute_final_amount(const PaymentInstruction& pi);
PaymentInstruction with_final_amount(PaymentInstruction pi);

}  // namespace cpmm::payload
