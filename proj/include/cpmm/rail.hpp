#pragma once

// HTTP 402 payment rail: X402 challenge headers, H402 signed payment headers,
// the five-step verification pipeline, escrow over a double-entry ledger and
// refund capability tokens.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "cpmm/crypto.hpp"
#include "cpmm/money.hpp"
#include "cpmm/payloads.hpp"

namespace cpmm::rail {

using Header = std::pair<std::string, std::string>;
using Headers = std::vector<Header>;

/// "latency:100ms,accuracy:95%" as ordered (dimension, threshold) pairs.
using QualityList = std::vector<std::pair<std::string, std::string>>;
std::string format_quality_list(const QualityList& list);
QualityList parse_quality_list(const std::string& text, const std::string& where);

struct X402Metadata {
    QualityList sla_vector;
    std::string refund_policy;
    bool operator==(const X402Metadata&) const = default;
};

struct X402Challenge {
    Money amount;                      ///< precision as written
    std::string currency;
    std::vector<std::string> methods;  ///< preference order
    std::optional<std::int64_t> timeout_seconds;
    std::string payment_address;       ///< scheme://opaque
    std::optional<X402Metadata> metadata;
    std::optional<std::string> economic_proposal;  ///< base64 of canonical EP bytes
    std::optional<std::string> negotiation_token;
    bool operator==(const X402Challenge&) const = default;

    /// Last path segment of payment_address.
    std::string invoice_id() const;
};

void validate(const X402Challenge& c);
Headers encode_402(const X402Challenge& c);
/// Strict: unknown X402-/CPMM- headers, duplicates and missing mandatory
/// headers are ParseErrors naming the header. Other headers are ignored.
X402Challenge parse_402(const Headers& headers);

/// Full response text: status line, Content-Type, the challenge headers and
/// Cache-Control, CRLF separated.
std::string render_402_response(const X402Challenge& c);
/// Inverse of render_402_response; requires the 402 status line.
X402Challenge parse_402_response(const std::string& text);

/// Embeds a proposal as base64url of its canonical bytes.
std::string encode_proposal_header(const payload::EconomicProposal& ep);
payload::EconomicProposal decode_proposal_header(const std::string& value);

/// SHA-256 hex of the canonical service_level_agreement object.
std::string sla_hash(const payload::ServiceLevelAgreement& sla);

// ---------------------------------------------------------------------------
// H402. The codec is lexical: values are kept as written so placeholder
// fixtures round-trip. Key, signature and timestamp are decoded when verified.

struct H402PaymentHeaders {
    std::string payment_key;  ///< base64 Ed25519 public key
    Money amount;
    std::string currency;
    std::string invoice;
    std::string signature;    ///< base64 Ed25519 signature
    std::string timestamp;    ///< unix seconds
    QualityList quality_request;
    std::string sla_acceptance;  ///< SHA-256 hex of the accepted SLA
    bool operator==(const H402PaymentHeaders&) const = default;
};

Headers encode_h402(const H402PaymentHeaders& h);
H402PaymentHeaders parse_h402(const Headers& headers);

/// "h402|v1|amount|currency|invoice|timestamp|quality_request|sla_acceptance"
std::string signing_payload(const H402PaymentHeaders& h);

inline constexpr std::int64_t kClockSkewSeconds = 300;

/// Remembers every ephemeral key a client has used.
class EphemeralKeyCache {
public:
    /// False when the key was already used.
    bool claim(const crypto::PublicKey& key);

private:
    std::mutex mu_;
    std::set<crypto::PublicKey> seen_;
};

/// Signs a payment for the challenge at time `now`. Throws StateError when
/// `key` was used before.
H402PaymentHeaders build_h402_payment(const X402Challenge& challenge, const crypto::SigningKey& key,
                                      const QualityList& quality_request, const std::string& sla_hash,
                                      std::int64_t now, EphemeralKeyCache& cache);

struct SettlementInstruction {
    std::string invoice;
    Money amount;
    std::string currency;
    std::string method = "H402";
    std::string payer_key;
};

enum class VerifyStep { Signature = 1, Quality = 2, Sla = 3, Attestation = 4, Settlement = 5 };

struct VerificationResult {
    bool settle = false;
    int failed_step = 0;  ///< 1..5, 0 when settled
    std::string reason;
    double penalty_fraction = 0.0;  ///< from the SLA check when it ran
    std::optional<SettlementInstruction> settlement;
};

/// Shared state of a verifier: trust root, clock and the spent
/// (payment key, invoice) pairs.
class PaymentVerifier {
public:
    explicit PaymentVerifier(crypto::PublicKey trust_root) : trust_root_(trust_root) {}

    VerificationResult verify(const H402PaymentHeaders& headers, const payload::QualityAttestation& att,
                              const std::vector<payload::SlaRule>& rules, const std::string& agreed_sla_hash,
                              std::int64_t now);

private:
    crypto::PublicKey trust_root_;
    std::mutex mu_;
    std::set<std::pair<std::string, std::string>> spent_;
};

/// Units measured as durations are upper bounds; every other unit is a floor.
bool quality_meets(const payload::Measured& delivered, const payload::Measured& requested);

// ---------------------------------------------------------------------------
// Ledger and escrow

enum class EntryReason { Fund, Release, RefundFull, RefundPartial };
std::string to_string(EntryReason r);

struct LedgerEntry {
    std::int64_t entry_id = 0;
    std::string from;
    std::string to;
    Money amount;
    EntryReason reason = EntryReason::Fund;
    std::int64_t timestamp = 0;
    bool operator==(const LedgerEntry&) const = default;
};

payload::Json to_json(const LedgerEntry& e);
LedgerEntry ledger_entry_from_json(const payload::Json& j);

/// Append-only, linearizable. Balances are signed: funding drives the payer
/// negative, so the sum over all accounts is always zero.
class Ledger {
public:
    Ledger() = default;
    Ledger(Ledger&& other) noexcept : entries_(std::move(other.entries_)), balances_(std::move(other.balances_)) {}

    /// Independent copy of the entries and balances.
    Ledger copy() const;

    /// Assigns ids and appends all entries as one atomic step.
    std::vector<LedgerEntry> append(std::vector<LedgerEntry> entries);
    std::vector<LedgerEntry> entries() const;
    Money balance(const std::string& account, int precision) const;
    std::map<std::string, std::int64_t> balances() const;

    /// One canonical JSON entry per line.
    std::string to_jsonl() const;
    static Ledger from_jsonl(const std::string& text);
    void save(const std::string& path) const;
    static Ledger load(const std::string& path);

private:
    mutable std::shared_mutex mu_;
    std::vector<LedgerEntry> entries_;
    std::map<std::string, std::int64_t> balances_;
};

enum class EscrowState { Created, Funded, Released, Refunded, PartiallyRefunded };
std::string to_string(EscrowState s);

struct EscrowAccount {
    std::string account_id;
    EscrowState state = EscrowState::Created;
    Money amount;  ///< agreed amount
    Money held;
    std::string payer;
    std::string payee;
    std::int64_t deadline = 0;
    std::string instruction_id;

    std::string escrow_party() const { return "escrow:" + account_id; }
    bool terminal() const;
};

enum class EscrowEventKind { Fund, VerifyPass, VerifyFail, Timeout };

struct EscrowEvent {
    EscrowEventKind kind = EscrowEventKind::Fund;
    double penalty_fraction = 0.0;  ///< VerifyFail only, in (0, 1]

    static EscrowEvent fund() { return {EscrowEventKind::Fund, 0.0}; }
    static EscrowEvent verify_pass() { return {EscrowEventKind::VerifyPass, 0.0}; }
    static EscrowEvent verify_fail(double f) { return {EscrowEventKind::VerifyFail, f}; }
    static EscrowEvent timeout() { return {EscrowEventKind::Timeout, 0.0}; }
};

struct Transition {
    EscrowAccount account;
    std::vector<LedgerEntry> entries;  ///< without ids
};

/// Pure transition function. Throws StateError on an illegal event.
Transition escrow_transition(const EscrowAccount& acct, const EscrowEvent& event, std::int64_t now);

/// Escrow accounts backed by one ledger. Events on one account apply in a
/// single total order; distinct accounts proceed independently.
class EscrowBook {
public:
    explicit EscrowBook(std::shared_ptr<Ledger> ledger = std::make_shared<Ledger>()) : ledger_(std::move(ledger)) {}

    EscrowAccount open(std::string account_id, Money amount, std::string payer, std::string payee,
                       std::int64_t deadline, std::string instruction_id = "");
    /// Applies an event; on StateError the account is left unchanged.
    EscrowAccount apply(const std::string& account_id, const EscrowEvent& event, std::int64_t now);
    EscrowAccount get(const std::string& account_id) const;
    bool contains(const std::string& account_id) const;
    /// Deep copy of every account and of the ledger.
    std::shared_ptr<EscrowBook> clone() const;
    Ledger& ledger() { return *ledger_; }
    const Ledger& ledger() const { return *ledger_; }

private:
    struct Slot {
        std::mutex mu;
        EscrowAccount account;
    };
    Slot& slot(const std::string& id) const;

    std::shared_ptr<Ledger> ledger_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::unique_ptr<Slot>> accounts_;
};

// ---------------------------------------------------------------------------
// Refund capability tokens

struct RefundToken {
    std::string token_id;
    std::string account_id;
    std::set<std::string> conditions;  ///< e.g. service_failure, sla_violation, quality_degradation
    std::int64_t expires_at = 0;
    std::string signature;  ///< base64, by the escrow authority
};

payload::Json to_json(const RefundToken& t);

/// Evidence offered with a refund claim.
struct RefundEvidence {
    bool timeout_elapsed = false;
    bool error_detected = false;
    std::optional<payload::SlaReport> sla_report;
};

struct RefundDecision {
    bool accepted = false;
    std::string reason;
    double refund_fraction = 0.0;
    std::optional<EscrowAccount> account;  ///< state after the refund
    bool operator==(const RefundDecision& o) const {
        return accepted == o.accepted && reason == o.reason && refund_fraction == o.refund_fraction;
    }
};

class RefundAuthority {
public:
    RefundAuthority(const crypto::SigningKey& key, EscrowBook& book) : key_(key), book_(book) {}

    RefundToken issue(const std::string& account_id, std::set<std::string> conditions, std::int64_t expires_at,
                      std::string token_id = "");

    /// Accepts only when the token verifies, has not expired, names a funded
    /// account, allows `condition` and the evidence shows it. An accepted
    /// token replays its first outcome without touching the ledger again.
    RefundDecision exercise(const RefundToken& token, const std::string& condition, const RefundEvidence& evidence,
                            std::int64_t now);

private:
    const crypto::SigningKey& key_;
    EscrowBook& book_;
    std::mutex mu_;
    std::map<std::string, RefundDecision> settled_;
    std::uint64_t issued_ = 0;
};

}  // namespace cpmm::rail
