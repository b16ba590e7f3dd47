#pragma once

// Ten-step negotiation and binding protocol with economic state, transition
// guards, rollback to stable checkpoints and a hash-chained audit trail.

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cpmm/crypto.hpp"
#include "cpmm/error.hpp"
#include "cpmm/money.hpp"
#include "cpmm/payloads.hpp"
#include "cpmm/rail.hpp"

namespace cpmm::acnbp {

using payload::Json;
using payload::Timestamp;

enum class Step {
    Discover,
    PreScreen,
    NegotiateRequest,
    NegotiateResponse,
    Bind,
    Commit,
    Execute,
    Verify,
    Release,
    Audit,
    Aborted,
};

inline constexpr std::array<Step, 10> kStepOrder{Step::Discover,         Step::PreScreen, Step::NegotiateRequest,
                                                 Step::NegotiateResponse, Step::Bind,      Step::Commit,
                                                 Step::Execute,          Step::Verify,    Step::Release,
                                                 Step::Audit};

std::string to_string(Step s);
Step step_from_string(const std::string& s);
/// Position in the ten-step order; Aborted has none and throws.
int step_index(Step s);
/// Label used in transcripts ("Pre-screen", "Negotiate", ...).
std::string display_label(Step s);

/// Checkpoints a rollback may land on.
bool is_checkpoint(Step s);

inline constexpr const char* kCpmmExtension = "org.cpmm.economic-coordination.v1";
inline constexpr int kMaxNegotiationRounds = 3;

struct ExtensionManifest {
    std::string extension_id;
    std::string version = "1.0";
    std::set<std::string> supported_features;
    bool operator==(const ExtensionManifest&) const = default;

    bool cpmm() const { return extension_id == kCpmmExtension; }
    static ExtensionManifest cpmm_default();
    static ExtensionManifest legacy();
};

Json to_json(const ExtensionManifest& m);
ExtensionManifest manifest_from_json(const Json& j);

/// Identity of a negotiating agent as the engine sees it.
struct Participant {
    std::string id;
    crypto::PublicKey key{};
    ExtensionManifest manifest;
};

// ---------------------------------------------------------------------------
// Signed message envelope

struct Envelope {
    std::string session_id;
    Step step = Step::Discover;
    std::string sender;
    Json payload = Json::object();
    Timestamp timestamp = 0;
    std::string signature;  ///< base64 Ed25519 over the canonical envelope without it
    bool operator==(const Envelope&) const = default;
};

/// Canonical object. "performance_bond" is reserved and always null.
Json to_json(const Envelope& e, bool with_signature = true);
Envelope envelope_from_json(const Json& j);
Envelope sign_envelope(Envelope e, const crypto::SigningKey& key);
bool verify_envelope(const Envelope& e, const crypto::PublicKey& key);

// ---------------------------------------------------------------------------
// Session state

struct EconomicContext {
    std::optional<payload::EconomicProposal> proposal;
    std::optional<Money> max_price;
    std::optional<Money> agreed_price;  ///< last quote
    Json quality_request = Json::object();
    std::string payment_method;
    std::string sla_commitment;
    bool accepted = false;
    std::string terms_hash;  ///< set at Bind
    std::string buyer_terms_signature;   ///< base64, over terms_digest
    std::string seller_terms_signature;
    bool empty() const { return !proposal && !agreed_price && terms_hash.empty(); }
};

struct PaymentState {
    std::string escrow_account;
    std::optional<payload::PaymentInstruction> instruction;
    int commit_attempts = 0;
};

struct VerifyOutcome {
    bool passed = false;
    int failed_step = 0;
    double penalty_fraction = 0.0;
    std::string reason;
};

struct QualityMetrics {
    std::optional<payload::QualityAttestation> attestation;
    std::optional<VerifyOutcome> outcome;
    std::string delivery_hash;
};

struct ReputationState {
    std::optional<int> buyer_before, seller_before, buyer_after, seller_after;
};

/// Certificate produced at Commit: the bound terms with both parties'
/// signatures, countersigned by the issuing authority.
struct TradeCertificate {
    std::string serial;
    std::string issuer = "CPMM Secure Authority";
    std::string buyer;
    std::string seller;
    std::string capability;
    std::string payment;  ///< "100 units", "0.003 USD"
    std::string terms_hash;
    std::string buyer_signature;   ///< hex
    std::string seller_signature;  ///< hex
    std::string authority_signature;
    bool operator==(const TradeCertificate&) const = default;
};

Json to_json(const TradeCertificate& c);
/// "0x2aa6e2fc...63e62fb3"
std::string abbreviate_signature(const std::string& hex);

struct NegotiationSession {
    std::string session_id;
    std::optional<Step> step;  ///< nullopt before Discover
    Participant buyer;
    Participant seller;
    bool legacy = false;
    std::string capability;
    std::int64_t units = 0;
    std::optional<Money> buyer_funds;  ///< escrow funding capability; nullopt is unlimited
    int rounds = 0;
    std::optional<Step> checkpoint;
    EconomicContext economic;
    PaymentState payment;
    QualityMetrics quality;
    ReputationState reputation;
    std::optional<TradeCertificate> certificate;
    std::optional<rail::EscrowState> escrow_state;
    Money released_to_seller;
    Money refunded_to_buyer;
    std::vector<Envelope> message_log;

    bool terminal() const { return step == Step::Audit || step == Step::Aborted; }
};

/// True when every logged message verifies under its sender's key.
bool verify_message_log(const NegotiationSession& s, const crypto::PublicKey& authority);

/// Steps a message may carry next.
std::vector<Step> allowed_next(const NegotiationSession& s);

struct GuardResult {
    bool pass = true;
    std::string violation;
    explicit operator bool() const { return pass; }
};

/// Pure predicate over the session for entering `target`.
GuardResult check_guard(const NegotiationSession& s, Step target);

/// Digest of the bound terms both parties sign at Bind.
crypto::Digest terms_digest(const NegotiationSession& s);

class ProtocolError : public StateError {
public:
    enum class Kind { StepOrder, Signature, Guard, Payload, Terminal };
    ProtocolError(Kind kind, const std::string& what) : StateError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// ---------------------------------------------------------------------------
// Audit

struct AuditEntry {
    std::int64_t index = 0;
    std::string prev_hash;  ///< hex; 64 zeros for the first entry
    Json record;
    std::string entry_hash;  ///< sha256(prev_hash || canonical record)
};

struct AuditTrail {
    std::string session_id;
    std::vector<AuditEntry> entries;
    Json summary;  ///< final amounts, compliance report, reputation deltas

    std::string to_jsonl() const;
    /// Index of the first entry whose hash or link fails; nullopt when intact.
    std::optional<std::size_t> first_broken() const;
    bool verify() const { return !first_broken(); }
};

/// Reputation change per side: +1 for a met obligation, -1 otherwise.
struct ReputationDelta {
    int buyer = 0;
    int seller = 0;
};
ReputationDelta reputation_delta(const NegotiationSession& s);

/// Scores never go below zero.
class ReputationBook {
public:
    explicit ReputationBook(int initial = 0) : initial_(initial) {}
    int score(const std::string& agent) const;
    int apply(const std::string& agent, int delta);

private:
    int initial_;
    mutable std::mutex mu_;
    std::map<std::string, int> scores_;
};

AuditTrail emit_audit(const NegotiationSession& s, const ReputationBook& book);

// ---------------------------------------------------------------------------
// Engine

/// Hosts sessions. Sessions share the escrow book, payment verifier and
/// reputation book but no session state.
class Engine {
public:
    Engine(const crypto::SigningKey& authority, crypto::PublicKey attestation_root,
           std::shared_ptr<rail::EscrowBook> book = std::make_shared<rail::EscrowBook>());

    NegotiationSession open(std::string session_id, Participant buyer, Participant seller,
                            std::optional<Money> buyer_funds = std::nullopt) const;

    /// Validates order, signature and guard, then applies the step effects.
    /// Throws ProtocolError; the input session is never modified.
    NegotiationSession advance(NegotiationSession s, const Envelope& message);

    /// Returns to the checkpoint, refunding any open escrow first.
    NegotiationSession rollback(NegotiationSession s, const std::string& reason, Timestamp now);
    NegotiationSession abort(NegotiationSession s, const std::string& reason, Timestamp now);

    rail::EscrowBook& escrow() { return *book_; }
    ReputationBook& reputation() { return reputation_; }
    const crypto::SigningKey& authority() const { return authority_; }
    const std::map<std::string, AuditTrail>& trails() const { return trails_; }

private:
    void apply_effects(NegotiationSession& s, const Envelope& m);
    void log_system(NegotiationSession& s, Step step, Json payload, Timestamp now);
    void refund_open_escrow(NegotiationSession& s, Timestamp now);

    const crypto::SigningKey& authority_;
    crypto::PublicKey attestation_root_;
    std::shared_ptr<rail::EscrowBook> book_;
    rail::PaymentVerifier verifier_;
    ReputationBook reputation_;
    std::mutex trails_mu_;
    std::map<std::string, AuditTrail> trails_;
};

// ---------------------------------------------------------------------------
// Scripted trade: builds and signs every message of a full session.

struct TradeSetup {
    std::string session_id = "session-1";
    std::string buyer_id = "buyer";
    std::string seller_id = "seller";
    const crypto::SigningKey* buyer_key = nullptr;
    const crypto::SigningKey* seller_key = nullptr;
    ExtensionManifest buyer_manifest = ExtensionManifest::cpmm_default();
    ExtensionManifest seller_manifest = ExtensionManifest::cpmm_default();
    std::string capability = "capability";
    std::int64_t units = 1;
    Money max_price;
    Money quote;
    std::string currency = "UNITS";
    std::string payment_method = "H402";
    /// Proposal the seller signs; base price and currency are overwritten.
    payload::EconomicProposal proposal_template;
    /// Request thresholds sent with the payment ("latency" -> "100ms").
    rail::QualityList quality_request;
    std::vector<payload::QualityMeasurement> delivered;
    const crypto::SigningKey* attester_key = nullptr;
    std::vector<std::string> attester_chain;
    Timestamp start = 0;
};

/// Payload for each step of a happy-path trade given the session so far.
Json scripted_payload(const TradeSetup& t, const NegotiationSession& s, Step step, Timestamp at);
Envelope scripted_message(const TradeSetup& t, const NegotiationSession& s, Step step, Timestamp at);
/// Opens and drives a session through all ten steps.
NegotiationSession run_trade(Engine& engine, const TradeSetup& t);

}  // namespace cpmm::acnbp
