#include <fstream>
#include <sstream>

#include "cpmm/error.hpp"
#include "cpmm/rail.hpp"

namespace cpmm::rail {

std::string to_string(EntryReason r) {
    switch (r) {
        case EntryReason::Fund: return "fund";
        case EntryReason::Release: return "release";
        case EntryReason::RefundFull: return "refund_full";
        case EntryReason::RefundPartial: return "refund_partial";
    }
    return "?";
}

std::string to_string(EscrowState s) {
    switch (s) {
        case EscrowState::Created: return "Created";
        case EscrowState::Funded: return "Funded";
        case EscrowState::Released: return "Released";
        case EscrowState::Refunded: return "Refunded";
        case EscrowState::PartiallyRefunded: return "PartiallyRefunded";
    }
    return "?";
}

payload::Json to_json(const LedgerEntry& e) {
    return {{"entry_id", e.entry_id},      {"from", e.from},
            {"to", e.to},                  {"amount", e.amount.to_string()},
            {"precision", e.amount.precision}, {"reason", to_string(e.reason)},
            {"timestamp", e.timestamp}};
}

LedgerEntry ledger_entry_from_json(const payload::Json& j) {
    try {
        if (j.size() != 7) throw ParseError("ledger", "expected exactly 7 fields");
        LedgerEntry e;
        e.entry_id = j.at("entry_id").get<std::int64_t>();
        e.from = j.at("from").get<std::string>();
        e.to = j.at("to").get<std::string>();
        e.amount = Money::parse(j.at("amount").get<std::string>(), j.at("precision").get<int>());
        const auto reason = j.at("reason").get<std::string>();
        if (reason == "fund") e.reason = EntryReason::Fund;
        else if (reason == "release") e.reason = EntryReason::Release;
        else if (reason == "refund_full") e.reason = EntryReason::RefundFull;
        else if (reason == "refund_partial") e.reason = EntryReason::RefundPartial;
        else throw ParseError("ledger", "unknown reason '" + reason + "'");
        e.timestamp = j.at("timestamp").get<std::int64_t>();
        return e;
    } catch (const payload::Json::exception& ex) {
        throw ParseError("ledger", ex.what());
    }
}

std::vector<LedgerEntry> Ledger::append(std::vector<LedgerEntry> entries) {
    std::unique_lock lock(mu_);
    for (auto& e : entries) {
        if (e.amount.minor < 0) throw ValidationError("ledger amounts are non-negative");
        e.entry_id = static_cast<std::int64_t>(entries_.size()) + 1;
        entries_.push_back(e);
        balances_[e.from] -= e.amount.minor;
        balances_[e.to] += e.amount.minor;
    }
    return entries;
}

Ledger Ledger::copy() const {
    std::shared_lock lock(mu_);
    Ledger l;
    l.entries_ = entries_;
    l.balances_ = balances_;
    return l;
}

std::vector<LedgerEntry> Ledger::entries() const {
    std::shared_lock lock(mu_);
    return entries_;
}

Money Ledger::balance(const std::string& account, int precision) const {
    std::shared_lock lock(mu_);
    auto it = balances_.find(account);
    return Money::from_minor(it == balances_.end() ? 0 : it->second, precision);
}

std::map<std::string, std::int64_t> Ledger::balances() const {
    std::shared_lock lock(mu_);
    return balances_;
}

std::string Ledger::to_jsonl() const {
    std::shared_lock lock(mu_);
    std::string out;
    for (const auto& e : entries_) out += payload::canonical_serialize(to_json(e)) + "\n";
    return out;
}

Ledger Ledger::from_jsonl(const std::string& text) {
    Ledger l;
    std::istringstream in(text);
    std::string line;
    std::int64_t expected = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        payload::Json j;
        try {
            j = payload::Json::parse(line);
        } catch (const payload::Json::exception& e) {
            throw ParseError("ledger", e.what());
        }
        auto e = ledger_entry_from_json(j);
        if (e.entry_id != expected++) throw ParseError("ledger", "entry ids must be consecutive from 1");
        l.append({e});
    }
    return l;
}

void Ledger::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write ledger to '" + path + "'");
    out << to_jsonl();
}

Ledger Ledger::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read ledger from '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_jsonl(buf.str());
}

bool EscrowAccount::terminal() const {
    return state == EscrowState::Released || state == EscrowState::Refunded || state == EscrowState::PartiallyRefunded;
}

Transition escrow_transition(const EscrowAccount& acct, const EscrowEvent& event, std::int64_t now) {
    Transition t{acct, {}};
    EscrowAccount& a = t.account;
    const std::string escrow = acct.escrow_party();
    auto illegal = [&](const char* what) {
        return StateError(std::string(what) + " is not allowed in state " + to_string(acct.state));
    };
    switch (event.kind) {
        case EscrowEventKind::Fund:
            if (acct.state != EscrowState::Created) throw illegal("fund");
            if (acct.amount.minor <= 0) throw ValidationError("escrow amount must be positive");
            a.state = EscrowState::Funded;
            a.held = acct.amount;
            t.entries.push_back({0, acct.payer, escrow, acct.amount, EntryReason::Fund, now});
            break;
        case EscrowEventKind::VerifyPass:
            if (acct.state != EscrowState::Funded) throw illegal("verify_pass");
            a.state = EscrowState::Released;
            t.entries.push_back({0, escrow, acct.payee, acct.held, EntryReason::Release, now});
            a.held.minor = 0;
            break;
        case EscrowEventKind::Timeout:
            if (acct.state != EscrowState::Funded) throw illegal("timeout");
            a.state = EscrowState::Refunded;
            t.entries.push_back({0, escrow, acct.payer, acct.held, EntryReason::RefundFull, now});
            a.held.minor = 0;
            break;
        case EscrowEventKind::VerifyFail: {
            if (acct.state != EscrowState::Funded) throw illegal("verify_fail");
            const double f = event.penalty_fraction;
            if (!(f > 0.0 && f <= 1.0)) throw ValidationError("penalty fraction must be in (0, 1]");
            if (f == 1.0) {
                a.state = EscrowState::Refunded;
                t.entries.push_back({0, escrow, acct.payer, acct.held, EntryReason::RefundFull, now});
            } else {
                a.state = EscrowState::PartiallyRefunded;
                std::int64_t to_payer = round_half_even(f * static_cast<double>(acct.held.minor));
                to_payer = std::min(to_payer, acct.held.minor);
                const std::int64_t to_payee = acct.held.minor - to_payer;
                const int p = acct.held.precision;
                if (to_payer > 0)
                    t.entries.push_back({0, escrow, acct.payer, Money::from_minor(to_payer, p), EntryReason::RefundPartial, now});
                if (to_payee > 0)
                    t.entries.push_back({0, escrow, acct.payee, Money::from_minor(to_payee, p), EntryReason::Release, now});
            }
            a.held.minor = 0;
            break;
        }
    }
    return t;
}

EscrowBook::Slot& EscrowBook::slot(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = accounts_.find(id);
    if (it == accounts_.end()) throw ValidationError("unknown escrow account '" + id + "'");
    return *it->second;
}

EscrowAccount EscrowBook::open(std::string account_id, Money amount, std::string payer, std::string payee,
                               std::int64_t deadline, std::string instruction_id) {
    if (amount.minor <= 0) throw ValidationError("escrow amount must be positive");
    if (payer.empty() || payee.empty() || payer == payee) throw ValidationError("escrow needs distinct payer and payee");
    auto s = std::make_unique<Slot>();
    s->account = EscrowAccount{account_id, EscrowState::Created, amount, Money::from_minor(0, amount.precision),
                               std::move(payer), std::move(payee), deadline, std::move(instruction_id)};
    EscrowAccount copy = s->account;
    std::unique_lock lock(mu_);
    if (!accounts_.emplace(account_id, std::move(s)).second)
        throw ValidationError("escrow account '" + account_id + "' already exists");
    return copy;
}

EscrowAccount EscrowBook::apply(const std::string& account_id, const EscrowEvent& event, std::int64_t now) {
    Slot& s = slot(account_id);
    std::lock_guard lock(s.mu);
    Transition t = escrow_transition(s.account, event, now);
    ledger_->append(std::move(t.entries));
    s.account = t.account;
    return s.account;
}

EscrowAccount EscrowBook::get(const std::string& account_id) const {
    Slot& s = slot(account_id);
    std::lock_guard lock(s.mu);
    return s.account;
}

bool EscrowBook::contains(const std::string& account_id) const {
    std::shared_lock lock(mu_);
    return accounts_.count(account_id) > 0;
}

std::shared_ptr<EscrowBook> EscrowBook::clone() const {
    auto copy = std::make_shared<EscrowBook>(std::make_shared<Ledger>(ledger_->copy()));
    std::shared_lock lock(mu_);
    for (const auto& [id, slot] : accounts_) {
        auto s = std::make_unique<Slot>();
        std::lock_guard slot_lock(slot->mu);
        s->account = slot->account;
        copy->accounts_.emplace(id, std::move(s));
    }
    return copy;
}

// ---------------------------------------------------------------------------

namespace {

payload::Json token_body(const RefundToken& t) {
    return {{"token_id", t.token_id},
            {"account_id", t.account_id},
            {"conditions", std::vector<std::string>(t.conditions.begin(), t.conditions.end())},
            {"expires_at", t.expires_at}};
}

crypto::Digest token_digest(const RefundToken& t) { return crypto::sha256(payload::canonical_serialize(token_body(t))); }

RefundDecision reject(std::string reason) { return {false, std::move(reason), 0.0, std::nullopt}; }

}  // namespace

payload::Json to_json(const RefundToken& t) {
    auto j = token_body(t);
    j["signature"] = t.signature;
    return j;
}

RefundToken RefundAuthority::issue(const std::string& account_id, std::set<std::string> conditions,
                                   std::int64_t expires_at, std::string token_id) {
    std::lock_guard lock(mu_);
    RefundToken t;
    t.token_id = token_id.empty() ? "refund-" + account_id + "-" + std::to_string(++issued_) : std::move(token_id);
    t.account_id = account_id;
    t.conditions = std::move(conditions);
    t.expires_at = expires_at;
    t.signature = crypto::to_base64(key_.sign(token_digest(t)));
    return t;
}

RefundDecision RefundAuthority::exercise(const RefundToken& token, const std::string& condition,
                                         const RefundEvidence& evidence, std::int64_t now) {
    std::lock_guard lock(mu_);
    if (auto it = settled_.find(token.token_id); it != settled_.end()) return it->second;

    try {
        if (!crypto::verify(key_.public_key(), token_digest(token), crypto::signature_from_base64(token.signature)))
            return reject("token signature invalid");
    } catch (const Error&) {
        return reject("token signature undecodable");
    }
    if (now > token.expires_at) return reject("token expired");
    if (!token.conditions.count(condition)) return reject("condition '" + condition + "' not covered by the token");
    if (!book_.contains(token.account_id)) return reject("unknown escrow account");

    double fraction = 0.0;
    if (condition == "service_failure") {
        if (!evidence.timeout_elapsed && !evidence.error_detected) return reject("no timeout or error evidenced");
        fraction = 1.0;
    } else if (condition == "sla_violation") {
        if (!evidence.sla_report || evidence.sla_report->compliant) return reject("no SLA violation evidenced");
        fraction = evidence.sla_report->penalty_fraction;
    } else if (condition == "quality_degradation") {
        if (!evidence.sla_report || evidence.sla_report->compliant || evidence.sla_report->penalty_fraction >= 1.0)
            return reject("no partial quality degradation evidenced");
        fraction = evidence.sla_report->penalty_fraction;
    } else {
        return reject("unknown refund condition '" + condition + "'");
    }

    EscrowAccount after;
    try {
        after = evidence.timeout_elapsed && fraction == 1.0
                    ? book_.apply(token.account_id, EscrowEvent::timeout(), now)
                    : book_.apply(token.account_id, EscrowEvent::verify_fail(fraction), now);
    } catch (const StateError& e) {
        return reject(e.what());
    }
    RefundDecision d{true, condition, fraction, after};
    settled_.emplace(token.token_id, d);
    return d;
}

}  // namespace cpmm::rail
